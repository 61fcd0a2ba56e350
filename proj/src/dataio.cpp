#include "sdmae/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace sdmae::dataio {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr size_t kCifarPlane = static_cast<size_t>(kCifarDim) * kCifarDim;
constexpr size_t kCifarRecord = 1 + kCifarChannels * kCifarPlane;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double luminance(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = h - std::floor(h);  // wrap into [0,1)
    const double hh = h * 6.0;
    const int sector = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    v = maxc;
    const double d = maxc - minc;
    s = maxc == 0.0 ? 0.0 : d / maxc;
    if (d == 0.0) {
        h = 0.0;
        return;
    }
    if (maxc == r) {
        h = (g - b) / d;
    } else if (maxc == g) {
        h = (b - r) / d + 2.0;
    } else {
        h = (r - g) / d + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// CIFAR binary loader
// ---------------------------------------------------------------------------

namespace {

void load_cifar_file(const std::string& path, int class_count, std::int64_t& next_id,
                     std::vector<ImageRecord>& out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("cannot open dataset file: " + path);
    f.seekg(0, std::ios::end);
    const auto file_size = static_cast<size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    if (file_size % kCifarRecord != 0) {
        const size_t bad_offset = (file_size / kCifarRecord) * kCifarRecord;
        throw_data(path + ": truncated record at byte offset " + std::to_string(bad_offset) +
                   " (file size " + std::to_string(file_size) + " is not a multiple of " +
                   std::to_string(kCifarRecord) + ")");
    }
    const size_t n_records = file_size / kCifarRecord;
    std::vector<unsigned char> buf(kCifarRecord);
    out.reserve(out.size() + n_records);
    for (size_t rec = 0; rec < n_records; ++rec) {
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!f) throw_io(path + ": read failed at record " + std::to_string(rec));
        const int label = buf[0];
        if (label >= class_count) {
            throw_data(path + ": label byte " + std::to_string(label) + " at byte offset " +
                       std::to_string(rec * kCifarRecord) + " exceeds class count " +
                       std::to_string(class_count));
        }
        ImageRecord img(kCifarDim, kCifarDim, kCifarChannels);
        img.label = label;
        img.source_id = next_id++;
        // file stores planar R,G,B; ImageRecord is channel-last interleaved
        for (int y = 0; y < kCifarDim; ++y) {
            for (int x = 0; x < kCifarDim; ++x) {
                const size_t p = static_cast<size_t>(y) * kCifarDim + x;
                for (int ch = 0; ch < kCifarChannels; ++ch) {
                    img.at(y, x, ch) = buf[1 + ch * kCifarPlane + p] / 255.0;
                }
            }
        }
        out.push_back(std::move(img));
    }
}

}  // namespace

std::vector<ImageRecord> load_cifar(const std::string& path, const std::string& split,
                                    int class_count) {
    if (split != "train" && split != "test") {
        throw_config("load_cifar: split must be 'train' or 'test', got '" + split + "'");
    }
    std::vector<ImageRecord> out;
    std::int64_t next_id = 0;
    std::error_code ec;
    if (std::filesystem::is_directory(path, ec)) {
        std::vector<std::string> files;
        if (split == "train") {
            for (int i = 1; i <= 5; ++i) {
                files.push_back(path + "/data_batch_" + std::to_string(i) + ".bin");
            }
        } else {
            files.push_back(path + "/test_batch.bin");
        }
        for (const auto& f : files) load_cifar_file(f, class_count, next_id, out);
    } else {
        load_cifar_file(path, class_count, next_id, out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus: procedural texture families, one per class (cycled with a
// class hue when there are more classes than families). Pure function of
// (spec, seed) — every image gets its own derived RNG stream.
// ---------------------------------------------------------------------------

namespace {

constexpr int kFamilies = 8;

struct Palette {
    double fg[3];
    double bg[3];
};

Palette sample_palette(int cls, int classes, Rng& rng) {
    Palette p;
    const double hue0 = static_cast<double>(cls) / classes + rng.uniform(-0.03, 0.03);
    hsv_to_rgb(hue0, rng.uniform(0.75, 1.0), rng.uniform(0.75, 1.0), p.fg[0], p.fg[1], p.fg[2]);
    hsv_to_rgb(hue0 + 0.5, rng.uniform(0.3, 0.55), rng.uniform(0.2, 0.45), p.bg[0], p.bg[1],
               p.bg[2]);
    return p;
}

void paint(ImageRecord& img, int y, int x, const double* rgb) {
    for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = rgb[ch];
}

ImageRecord synth_image(int cls, int classes, int res, Rng& rng) {
    ImageRecord img(res, res, 3);
    img.label = cls;
    const Palette pal = sample_palette(cls, classes, rng);
    const int family = cls % kFamilies;
    switch (family) {
        case 0: {  // horizontal stripes
            const int k = 2 + rng.uniform_int(5);
            const int phase = rng.uniform_int(2 * k);
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x)
                    paint(img, y, x, ((y + phase) / k) % 2 ? pal.fg : pal.bg);
            break;
        }
        case 1: {  // vertical stripes
            const int k = 2 + rng.uniform_int(5);
            const int phase = rng.uniform_int(2 * k);
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x)
                    paint(img, y, x, ((x + phase) / k) % 2 ? pal.fg : pal.bg);
            break;
        }
        case 2: {  // checkerboard
            const int k = 3 + rng.uniform_int(5);
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x)
                    paint(img, y, x, ((x / k + y / k) % 2) ? pal.fg : pal.bg);
            break;
        }
        case 3: {  // scattered disks
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) paint(img, y, x, pal.bg);
            const int disks = 3 + rng.uniform_int(4);
            for (int d = 0; d < disks; ++d) {
                const int cy = rng.uniform_int(res), cx = rng.uniform_int(res);
                const int r = 3 + rng.uniform_int(res / 5);
                for (int y = std::max(0, cy - r); y < std::min(res, cy + r + 1); ++y)
                    for (int x = std::max(0, cx - r); x < std::min(res, cx + r + 1); ++x)
                        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
                            paint(img, y, x, pal.fg);
            }
            break;
        }
        case 4: {  // diagonal gradient
            const bool flip = rng.bernoulli(0.5);
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    double t = static_cast<double>(x + y) / (2 * res - 2);
                    if (flip) t = 1.0 - t;
                    double rgb[3];
                    for (int ch = 0; ch < 3; ++ch)
                        rgb[ch] = pal.bg[ch] + t * (pal.fg[ch] - pal.bg[ch]);
                    paint(img, y, x, rgb);
                }
            break;
        }
        case 5: {  // concentric rings
            const double cy = rng.uniform(res * 0.3, res * 0.7);
            const double cx = rng.uniform(res * 0.3, res * 0.7);
            const int k = 3 + rng.uniform_int(4);
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) {
                    const double d = std::hypot(y - cy, x - cx);
                    paint(img, y, x, (static_cast<int>(d) / k) % 2 ? pal.fg : pal.bg);
                }
            break;
        }
        case 6: {  // blocky mosaic
            const int cell = 4;
            const int cells = res / cell;
            std::vector<char> on(static_cast<size_t>(cells) * cells);
            for (auto& b : on) b = rng.bernoulli(0.5) ? 1 : 0;
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x)
                    paint(img, y, x, on[(y / cell) * cells + (x / cell)] ? pal.fg : pal.bg);
            break;
        }
        default: {  // cross / plus
            for (int y = 0; y < res; ++y)
                for (int x = 0; x < res; ++x) paint(img, y, x, pal.bg);
            const int bar = 2 + rng.uniform_int(res / 6);
            const int vx = rng.uniform_int(res - bar + 1);
            const int hy = rng.uniform_int(res - bar + 1);
            for (int y = 0; y < res; ++y)
                for (int x = vx; x < vx + bar; ++x) paint(img, y, x, pal.fg);
            for (int y = hy; y < hy + bar; ++y)
                for (int x = 0; x < res; ++x) paint(img, y, x, pal.fg);
            break;
        }
    }
    // A whisper of pixel noise so patches are never exactly constant, kept far
    // below the target-normalization guard so flat patches still normalize to
    // ~zero rather than to amplified noise.
    for (auto& v : img.pixels) v = clamp01(v + rng.uniform(-0.0002, 0.0002));
    return img;
}

}  // namespace

std::vector<ImageRecord> gen_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 2) throw_config("gen_synthetic: need at least 2 classes");
    if (spec.per_class < 1) throw_config("gen_synthetic: per_class must be positive");
    if (spec.patch_size < 1 || spec.resolution % spec.patch_size != 0) {
        throw_config("gen_synthetic: resolution " + std::to_string(spec.resolution) +
                     " is not divisible by patch size " + std::to_string(spec.patch_size));
    }
    std::vector<ImageRecord> out;
    out.reserve(static_cast<size_t>(spec.classes) * spec.per_class);
    std::int64_t id = 0;
    for (int cls = 0; cls < spec.classes; ++cls) {
        for (int i = 0; i < spec.per_class; ++i) {
            Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(cls),
                                static_cast<std::uint64_t>(i)));
            ImageRecord img = synth_image(cls, spec.classes, spec.resolution, rng);
            img.source_id = id++;
            out.push_back(std::move(img));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentations
// ---------------------------------------------------------------------------

AugmentPolicy AugmentPolicy::defaults(int out_size) {
    AugmentPolicy p;
    p.out_size = out_size;
    return p;
}

AugmentPolicy AugmentPolicy::identity(int out_size) {
    AugmentPolicy p;
    p.out_size = out_size;
    p.strong_scale_min = p.strong_scale_max = 1.0;
    p.weak_scale_min = p.weak_scale_max = 1.0;
    p.aspect_min = p.aspect_max = 1.0;
    p.flip_p = 0.0;
    p.jitter_p = 0.0;
    p.grayscale_p = 0.0;
    p.blur_p = 0.0;
    p.solarize_p = 0.0;
    return p;
}

AugmentPolicy AugmentPolicy::scaled(int out_size, double s) {
    AugmentPolicy full = defaults(out_size);
    if (s >= 1.0) return full;
    const AugmentPolicy id = identity(out_size);
    auto lerp = [s](double a, double b) { return a + (b - a) * s; };
    AugmentPolicy p = full;
    p.strong_scale_min = lerp(id.strong_scale_min, full.strong_scale_min);
    p.strong_scale_max = lerp(id.strong_scale_max, full.strong_scale_max);
    p.weak_scale_min = lerp(id.weak_scale_min, full.weak_scale_min);
    p.weak_scale_max = lerp(id.weak_scale_max, full.weak_scale_max);
    p.aspect_min = lerp(id.aspect_min, full.aspect_min);
    p.aspect_max = lerp(id.aspect_max, full.aspect_max);
    p.flip_p = s * full.flip_p;
    p.jitter_p = s * full.jitter_p;
    p.jitter_brightness = s * full.jitter_brightness;
    p.jitter_contrast = s * full.jitter_contrast;
    p.jitter_saturation = s * full.jitter_saturation;
    p.jitter_hue = s * full.jitter_hue;
    p.grayscale_p = s * full.grayscale_p;
    p.blur_p = s * full.blur_p;
    p.blur_sigma_max = lerp(full.blur_sigma_min, full.blur_sigma_max);
    p.solarize_p = s * full.solarize_p;
    return p;
}

namespace {

// Bilinear crop+resize. Source coordinates follow the half-pixel convention,
// so a full-frame crop at equal resolution lands on integer coordinates and
// copies the input bit-for-bit.
ImageRecord crop_resize(const ImageRecord& src, int y0, int x0, int ch_, int cw, int out) {
    ImageRecord dst(out, out, src.c);
    dst.label = src.label;
    dst.source_id = src.source_id;
    const double sy_scale = static_cast<double>(ch_) / out;
    const double sx_scale = static_cast<double>(cw) / out;
    for (int y = 0; y < out; ++y) {
        double sy = (y + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(ch_ - 1));
        const int iy = static_cast<int>(sy);
        const int iy1 = std::min(iy + 1, ch_ - 1);
        const double fy = sy - iy;
        for (int x = 0; x < out; ++x) {
            double sx = (x + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(cw - 1));
            const int ix = static_cast<int>(sx);
            const int ix1 = std::min(ix + 1, cw - 1);
            const double fx = sx - ix;
            for (int c = 0; c < src.c; ++c) {
                const double v00 = src.at(y0 + iy, x0 + ix, c);
                const double v01 = src.at(y0 + iy, x0 + ix1, c);
                const double v10 = src.at(y0 + iy1, x0 + ix, c);
                const double v11 = src.at(y0 + iy1, x0 + ix1, c);
                const double top = v00 + fx * (v01 - v00);
                const double bot = v10 + fx * (v11 - v10);
                dst.at(y, x, c) = top + fy * (bot - top);
            }
        }
    }
    return dst;
}

ImageRecord random_resized_crop(const ImageRecord& img, double smin, double smax,
                                const AugmentPolicy& p, Rng& rng) {
    const double full_area = static_cast<double>(img.h) * img.w;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double s = rng.uniform(smin, smax);
        const double a = std::exp(rng.uniform(std::log(p.aspect_min), std::log(p.aspect_max)));
        const double area = s * full_area;
        const int cw = static_cast<int>(std::lround(std::sqrt(area * a)));
        const int ch_ = static_cast<int>(std::lround(std::sqrt(area / a)));
        if (cw >= 1 && ch_ >= 1 && cw <= img.w && ch_ <= img.h) {
            const int y0 = rng.uniform_int(img.h - ch_ + 1);
            const int x0 = rng.uniform_int(img.w - cw + 1);
            return crop_resize(img, y0, x0, ch_, cw, p.out_size);
        }
    }
    // fallback: centered square of the short side
    const int side = std::min(img.h, img.w);
    return crop_resize(img, (img.h - side) / 2, (img.w - side) / 2, side, side, p.out_size);
}

void hflip(ImageRecord& img) {
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w / 2; ++x) {
            for (int c = 0; c < img.c; ++c) {
                std::swap(img.at(y, x, c), img.at(y, img.w - 1 - x, c));
            }
        }
    }
}

void apply_brightness(ImageRecord& img, double f) {
    for (auto& v : img.pixels) v = clamp01(v * f);
}

void apply_contrast(ImageRecord& img, double f) {
    double mean = 0.0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            mean += luminance(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
    mean /= static_cast<double>(img.h) * img.w;
    for (auto& v : img.pixels) v = clamp01(mean + (v - mean) * f);
}

void apply_saturation(ImageRecord& img, double f) {
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const double l = luminance(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp01(l + (img.at(y, x, c) - l) * f);
        }
    }
}

void apply_hue(ImageRecord& img, double shift) {
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            double h, s, v;
            rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
            double r, g, b;
            hsv_to_rgb(h + shift, s, v, r, g, b);
            img.at(y, x, 0) = clamp01(r);
            img.at(y, x, 1) = clamp01(g);
            img.at(y, x, 2) = clamp01(b);
        }
    }
}

void apply_grayscale(ImageRecord& img) {
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const double l = luminance(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = l;
        }
    }
}

void apply_blur(ImageRecord& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        norm += kernel[i + radius];
    }
    for (auto& k : kernel) k /= norm;

    ImageRecord tmp = img;
    // horizontal pass (clamp-to-edge), then vertical
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.c; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * img.at(y, std::clamp(x + i, 0, img.w - 1), c);
                tmp.at(y, x, c) = acc;
            }
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.c; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp.at(std::clamp(y + i, 0, img.h - 1), x, c);
                img.at(y, x, c) = clamp01(acc);
            }
}

void apply_solarize(ImageRecord& img, double threshold) {
    for (auto& v : img.pixels) {
        if (v >= threshold) v = 1.0 - v;
    }
}

ImageRecord strong_view(const ImageRecord& img, const AugmentPolicy& p, Rng& rng) {
    ImageRecord out = random_resized_crop(img, p.strong_scale_min, p.strong_scale_max, p, rng);
    if (rng.uniform() < p.flip_p) hflip(out);
    if (rng.uniform() < p.jitter_p) {
        apply_brightness(out, rng.uniform(std::max(0.0, 1.0 - p.jitter_brightness),
                                          1.0 + p.jitter_brightness));
        apply_contrast(out, rng.uniform(std::max(0.0, 1.0 - p.jitter_contrast),
                                        1.0 + p.jitter_contrast));
        apply_saturation(out, rng.uniform(std::max(0.0, 1.0 - p.jitter_saturation),
                                          1.0 + p.jitter_saturation));
        apply_hue(out, rng.uniform(-p.jitter_hue, p.jitter_hue));
    }
    if (rng.uniform() < p.grayscale_p) apply_grayscale(out);
    if (rng.uniform() < p.blur_p) apply_blur(out, rng.uniform(p.blur_sigma_min, p.blur_sigma_max));
    if (rng.uniform() < p.solarize_p) apply_solarize(out, p.solarize_threshold);
    return out;
}

ImageRecord weak_view(const ImageRecord& img, const AugmentPolicy& p, Rng& rng) {
    ImageRecord out = random_resized_crop(img, p.weak_scale_min, p.weak_scale_max, p, rng);
    if (rng.uniform() < p.flip_p) hflip(out);
    return out;
}

}  // namespace

AugmentedPair augment_pair(const ImageRecord& img, const AugmentPolicy& policy,
                           std::uint64_t seed) {
    if (policy.out_size < 1 || policy.out_size > img.h || policy.out_size > img.w) {
        throw_config("augment_pair: crop window " + std::to_string(policy.out_size) +
                     " exceeds image " + std::to_string(img.h) + "x" + std::to_string(img.w));
    }
    if (!(policy.aspect_min > 0.0 && policy.aspect_max >= policy.aspect_min)) {
        throw_config("augment_pair: invalid aspect range");
    }
    AugmentedPair pair;
    pair.seed = seed;
    Rng strong_rng(derive_seed(seed, /*stream=*/1));
    Rng weak_rng(derive_seed(seed, /*stream=*/2));
    pair.strong = strong_view(img, policy, strong_rng);
    pair.weak = weak_view(img, policy, weak_rng);
    return pair;
}

// ---------------------------------------------------------------------------
// Patchification
// ---------------------------------------------------------------------------

PatchSequence patchify(const ImageRecord& img, int patch_size) {
    if (patch_size < 1 || img.h % patch_size != 0 || img.w % patch_size != 0) {
        throw_config("patchify: image " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                     " is not divisible by patch size " + std::to_string(patch_size));
    }
    PatchSequence seq;
    seq.patch_size = patch_size;
    seq.grid_h = img.h / patch_size;
    seq.grid_w = img.w / patch_size;
    const int n = seq.grid_h * seq.grid_w;
    const int d = patch_size * patch_size * img.c;
    seq.tokens = Mat(n, d);
    for (int gy = 0; gy < seq.grid_h; ++gy) {
        for (int gx = 0; gx < seq.grid_w; ++gx) {
            double* row = seq.tokens.row_ptr(gy * seq.grid_w + gx);
            int k = 0;
            for (int py = 0; py < patch_size; ++py) {
                for (int px = 0; px < patch_size; ++px) {
                    for (int c = 0; c < img.c; ++c) {
                        row[k++] = img.at(gy * patch_size + py, gx * patch_size + px, c);
                    }
                }
            }
        }
    }
    return seq;
}

ImageRecord unpatchify(const PatchSequence& seq) {
    const int p = seq.patch_size;
    if (p < 1 || seq.tokens.rows != seq.grid_h * seq.grid_w) {
        throw_config("unpatchify: token count does not match grid");
    }
    if (seq.tokens.cols % (p * p) != 0) {
        throw_config("unpatchify: token dimension is not a multiple of patch area");
    }
    const int c = seq.tokens.cols / (p * p);
    ImageRecord img(seq.grid_h * p, seq.grid_w * p, c);
    for (int gy = 0; gy < seq.grid_h; ++gy) {
        for (int gx = 0; gx < seq.grid_w; ++gx) {
            const double* row = seq.tokens.row_ptr(gy * seq.grid_w + gx);
            int k = 0;
            for (int py = 0; py < p; ++py) {
                for (int px = 0; px < p; ++px) {
                    for (int ch = 0; ch < c; ++ch) {
                        img.at(gy * p + py, gx * p + px, ch) = row[k++];
                    }
                }
            }
        }
    }
    return img;
}

Mat normalize_targets(const Mat& patches, std::vector<double>* row_means,
                      std::vector<double>* row_denoms) {
    if (patches.cols < 2) throw_config("normalize_targets: rows need at least 2 elements");
    constexpr double kEps = 1e-6;
    Mat out(patches.rows, patches.cols);
    if (row_means) row_means->assign(patches.rows, 0.0);
    if (row_denoms) row_denoms->assign(patches.rows, 0.0);
    for (int r = 0; r < patches.rows; ++r) {
        const double* src = patches.row_ptr(r);
        double mean = 0.0;
        for (int c = 0; c < patches.cols; ++c) mean += src[c];
        mean /= patches.cols;
        double var = 0.0;
        for (int c = 0; c < patches.cols; ++c) {
            const double d = src[c] - mean;
            var += d * d;
        }
        var /= patches.cols;  // population variance
        const double denom = std::sqrt(var + kEps);
        double* dst = out.row_ptr(r);
        for (int c = 0; c < patches.cols; ++c) dst[c] = (src[c] - mean) / denom;
        if (row_means) (*row_means)[r] = mean;
        if (row_denoms) (*row_denoms)[r] = denom;
    }
    return out;
}

}  // namespace sdmae::dataio
