#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdmae/common.hpp"
#include "sdmae/rng.hpp"

namespace sdmae::dataio {

// One image in [0,1] doubles, channel-last layout: pixels[(y*w + x)*c + ch].
struct ImageRecord {
    int h = 0, w = 0, c = 0;
    std::vector<double> pixels;
    int label = -1;
    std::int64_t source_id = 0;

    ImageRecord() = default;
    ImageRecord(int h_, int w_, int c_)
        : h(h_), w(w_), c(c_), pixels(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

    double& at(int y, int x, int ch) {
        return pixels[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return pixels[(static_cast<size_t>(y) * w + x) * c + ch];
    }
};

// The two augmented views of one image; both are derived deterministically
// from `seed` alone (given the source image and policy).
struct AugmentedPair {
    ImageRecord strong;
    ImageRecord weak;
    std::uint64_t seed = 0;
};

// Tokenized image: N x D matrix with N = (h/P)*(w/P) row-major patches and
// D = P*P*c values per patch (patch pixels row-major, channels innermost).
struct PatchSequence {
    Mat tokens;
    int patch_size = 0;
    int grid_h = 0, grid_w = 0;
};

struct SyntheticSpec {
    int classes = 4;
    int per_class = 100;
    int resolution = 32;
    int patch_size = 4;  // only used to validate divisibility
    std::uint64_t seed = 0;
};

// Both augmentation pipelines in one bundle. The strong view runs the full
// list; the weak view runs only its crop range plus the flip.
struct AugmentPolicy {
    int out_size = 32;  // output resolution of both views

    // random resized crop
    double strong_scale_min = 0.2, strong_scale_max = 1.0;
    double weak_scale_min = 0.5, weak_scale_max = 1.0;
    double aspect_min = 3.0 / 4.0, aspect_max = 4.0 / 3.0;

    double flip_p = 0.5;

    // color jitter, applied in fixed order brightness/contrast/saturation/hue
    double jitter_p = 0.8;
    double jitter_brightness = 0.4;
    double jitter_contrast = 0.4;
    double jitter_saturation = 0.2;
    double jitter_hue = 0.1;

    double grayscale_p = 0.2;

    double blur_p = 0.5;
    double blur_sigma_min = 0.1, blur_sigma_max = 2.0;

    double solarize_p = 0.2;
    double solarize_threshold = 0.5;

    static AugmentPolicy defaults(int out_size);
    // Everything off and the crop pinned to the full frame: both views come
    // back bit-identical to the input.
    static AugmentPolicy identity(int out_size);
    // Linear blend between identity (s=0) and defaults (s=1): probabilities
    // and jitter magnitudes scale with s, crop/aspect ranges interpolate.
    static AugmentPolicy scaled(int out_size, double s);
};

// Reads one binary shard of [1 label byte][1024 R][1024 G][1024 B] records,
// or, if `path` is a directory, the standard shard files for `split`
// ("train" or "test"). Pixels are byte/255; labels checked against
// class_count.
std::vector<ImageRecord> load_cifar(const std::string& path, const std::string& split,
                                    int class_count = 10);

// Deterministic procedural corpus: `classes` separable texture families,
// exactly per_class images each, pure function of (spec contents, seed).
std::vector<ImageRecord> gen_synthetic(const SyntheticSpec& spec);

AugmentedPair augment_pair(const ImageRecord& img, const AugmentPolicy& policy,
                           std::uint64_t seed);

PatchSequence patchify(const ImageRecord& img, int patch_size);
ImageRecord unpatchify(const PatchSequence& seq);

// Per-row shift/scale to zero mean and unit population std (eps-guarded).
// When stats are requested they receive each row's mean and the exact
// denominator used, so callers can invert the transform.
Mat normalize_targets(const Mat& patches, std::vector<double>* row_means = nullptr,
                      std::vector<double>* row_denoms = nullptr);

}  // namespace sdmae::dataio
