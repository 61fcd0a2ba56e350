#include "sdmae/image_io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

namespace sdmae::image_io {

namespace {

unsigned char quantize(double v) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

std::vector<unsigned char> quantize_pixels(const dataio::ImageRecord& img) {
    if (img.c != 3) {
        throw_config("image output needs 3 channels, got " + std::to_string(img.c));
    }
    if (img.h < 1 || img.w < 1 ||
        img.pixels.size() != static_cast<size_t>(img.h) * img.w * img.c) {
        throw_config("image output: inconsistent image dimensions");
    }
    std::vector<unsigned char> bytes(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) bytes[i] = quantize(img.pixels[i]);
    return bytes;
}

void write_blob(const std::string& path, const void* data, size_t n) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw_io("cannot open " + path + " for writing");
    const size_t written = std::fwrite(data, 1, n, f);
    const bool closed = std::fclose(f) == 0;
    if (written != n || !closed) throw_io("short write to " + path);
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

std::uint32_t crc32(const unsigned char* data, size_t n) {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::uint32_t adler32(const std::vector<unsigned char>& data) {
    std::uint32_t a = 1, b = 0;
    for (unsigned char x : data) {
        a = (a + x) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    put_be32(out, crc32(out.data() + crc_start, 4 + data.size()));
}

}  // namespace

void write_ppm(const std::string& path, const dataio::ImageRecord& img) {
    const std::vector<unsigned char> bytes = quantize_pixels(img);
    char header[64];
    const int header_len =
        std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", img.w, img.h);
    std::vector<unsigned char> blob(header, header + header_len);
    blob.insert(blob.end(), bytes.begin(), bytes.end());
    write_blob(path, blob.data(), blob.size());
}

void write_png(const std::string& path, const dataio::ImageRecord& img) {
    const std::vector<unsigned char> bytes = quantize_pixels(img);

    // Raw scanline stream: one filter byte (0 = none) before each row.
    const size_t row_bytes = static_cast<size_t>(img.w) * 3;
    std::vector<unsigned char> raw;
    raw.reserve((row_bytes + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), bytes.begin() + y * row_bytes, bytes.begin() + (y + 1) * row_bytes);
    }

    // zlib wrapper around stored deflate blocks of at most 65535 bytes.
    std::vector<unsigned char> zlib;
    zlib.push_back(0x78);
    zlib.push_back(0x01);
    size_t off = 0;
    do {
        const size_t len = std::min<size_t>(raw.size() - off, 65535);
        const bool last = off + len == raw.size();
        zlib.push_back(last ? 1 : 0);
        zlib.push_back(static_cast<unsigned char>(len & 0xFF));
        zlib.push_back(static_cast<unsigned char>(len >> 8));
        zlib.push_back(static_cast<unsigned char>(~len & 0xFF));
        zlib.push_back(static_cast<unsigned char>((~len >> 8) & 0xFF));
        zlib.insert(zlib.end(), raw.begin() + off, raw.begin() + off + len);
        off += len;
    } while (off < raw.size());
    put_be32(zlib, adler32(raw));

    std::vector<unsigned char> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.w));
    put_be32(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // no filter method variants
    ihdr.push_back(0);  // no interlace

    static const unsigned char signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    std::vector<unsigned char> blob(signature, signature + 8);
    put_chunk(blob, "IHDR", ihdr);
    put_chunk(blob, "IDAT", zlib);
    put_chunk(blob, "IEND", {});
    write_blob(path, blob.data(), blob.size());
}

std::string write_image(const std::string& path_stem, const std::string& format,
                        const dataio::ImageRecord& img) {
    if (format == "ppm") {
        const std::string path = path_stem + ".ppm";
        write_ppm(path, img);
        return path;
    }
    if (format == "png") {
        const std::string path = path_stem + ".png";
        write_png(path, img);
        return path;
    }
    throw_config("unknown image format '" + format + "' (expected ppm or png)");
}

dataio::ImageRecord triptych(const dataio::ImageRecord& original, const masking::MaskPlan& plan,
                             const Mat& predicted_patches, int patch_size) {
    dataio::PatchSequence seq = dataio::patchify(original, patch_size);
    const int n = seq.tokens.rows;
    if (plan.n_total != n) {
        throw_config("triptych: mask plan covers " + std::to_string(plan.n_total) +
                     " patches, image has " + std::to_string(n));
    }
    if (predicted_patches.rows != n || predicted_patches.cols != seq.tokens.cols) {
        throw_config("triptych: prediction shape " + std::to_string(predicted_patches.rows) +
                     "x" + std::to_string(predicted_patches.cols) + " does not match " +
                     std::to_string(n) + "x" + std::to_string(seq.tokens.cols) + " patches");
    }

    std::vector<double> means, denoms;
    dataio::normalize_targets(seq.tokens, &means, &denoms);

    // Masked patches: gray in the middle panel, de-normalized prediction in
    // the right one. Visible patches pass through untouched in both.
    dataio::PatchSequence masked = seq;
    dataio::PatchSequence predicted = seq;
    for (int row : plan.masked_idx) {
        for (int c = 0; c < seq.tokens.cols; ++c) {
            masked.tokens.at(row, c) = 0.5;
            predicted.tokens.at(row, c) =
                predicted_patches.at(row, c) * denoms[row] + means[row];
        }
    }

    const dataio::ImageRecord mid = dataio::unpatchify(masked);
    const dataio::ImageRecord right = dataio::unpatchify(predicted);

    dataio::ImageRecord out(original.h, 3 * original.w, original.c);
    out.label = original.label;
    out.source_id = original.source_id;
    for (int y = 0; y < original.h; ++y) {
        for (int x = 0; x < original.w; ++x) {
            for (int ch = 0; ch < original.c; ++ch) {
                out.at(y, x, ch) = original.at(y, x, ch);
                out.at(y, x + original.w, ch) = mid.at(y, x, ch);
                out.at(y, x + 2 * original.w, ch) = right.at(y, x, ch);
            }
        }
    }
    return out;
}

}  // namespace sdmae::image_io
