#pragma once

#include <string>

#include "sdmae/common.hpp"
#include "sdmae/dataio.hpp"
#include "sdmae/masking.hpp"

namespace sdmae::image_io {

// Binary PPM (P6). Channel values are clamped to [0,1] and quantized to
// 8 bits; the image must be 3-channel.
void write_ppm(const std::string& path, const dataio::ImageRecord& img);

// The same pixels as an RGB8 PNG. The zlib stream inside IDAT uses stored
// (uncompressed) deflate blocks, so no compression library is needed.
void write_png(const std::string& path, const dataio::ImageRecord& img);

// Dispatch on "ppm" | "png", appending the extension. Returns the full path.
std::string write_image(const std::string& path_stem, const std::string& format,
                        const dataio::ImageRecord& img);

// Side-by-side inspection panel: the input, the input with every masked
// patch grayed out, and the reconstruction. Predicted patches arrive in
// normalized-target space and are mapped back through each patch's true
// mean/denominator; visible patches are copied from the input unchanged.
dataio::ImageRecord triptych(const dataio::ImageRecord& original, const masking::MaskPlan& plan,
                             const Mat& predicted_patches, int patch_size);

}  // namespace sdmae::image_io
