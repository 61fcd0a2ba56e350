#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sdmae/image_io.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace sdmae;
namespace fs = std::filesystem;

namespace {

fs::path out_dir() {
    const fs::path dir = fs::temp_directory_path() / "sdmae_image_tests";
    fs::create_directories(dir);
    return dir;
}

std::vector<unsigned char> slurp_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string s = ss.str();
    return {s.begin(), s.end()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

// Checkerboard-ish test image with distinct, exactly representable values.
dataio::ImageRecord test_image(int h, int w) {
    dataio::ImageRecord img(h, w, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = (y * w + x) % 256 / 255.0;
            img.at(y, x, 1) = ((y + x) % 2) ? 0.75 : 0.25;
            img.at(y, x, 2) = x % 256 / 255.0;
        }
    }
    return img;
}

}  // namespace

TEST_CASE("ppm output is byte-exact, with clamping and round-to-nearest") {
    dataio::ImageRecord img(1, 2, 3);
    img.at(0, 0, 0) = 0.0;
    img.at(0, 0, 1) = 0.5;    // 127.5 rounds away from zero -> 128
    img.at(0, 0, 2) = 1.0;
    img.at(0, 1, 0) = -0.2;   // clamps to 0
    img.at(0, 1, 1) = 2.0;    // clamps to 255
    img.at(0, 1, 2) = 0.25;   // 63.75 -> 64

    const fs::path path = out_dir() / "tiny.ppm";
    image_io::write_ppm(path.string(), img);
    const std::vector<unsigned char> blob = slurp_bytes(path);

    const std::string header = "P6\n2 1\n255\n";
    REQUIRE(blob.size() == header.size() + 6);
    CHECK(std::equal(header.begin(), header.end(), blob.begin()));
    const unsigned char* px = blob.data() + header.size();
    CHECK(px[0] == 0);
    CHECK(px[1] == 128);
    CHECK(px[2] == 255);
    CHECK(px[3] == 0);
    CHECK(px[4] == 255);
    CHECK(px[5] == 64);
}

TEST_CASE("png output carries the exact pixels in a valid container") {
    const dataio::ImageRecord img = test_image(5, 70);
    const fs::path path = out_dir() / "tiny.png";
    image_io::write_png(path.string(), img);
    const std::vector<unsigned char> blob = slurp_bytes(path);

    // Signature, IHDR geometry and color layout.
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    REQUIRE(blob.size() > 45);
    CHECK(std::equal(sig, sig + 8, blob.begin()));
    CHECK(be32(blob, 8) == 13);  // IHDR length
    CHECK(std::string(blob.begin() + 12, blob.begin() + 16) == "IHDR");
    CHECK(be32(blob, 16) == 70);
    CHECK(be32(blob, 20) == 5);
    CHECK(blob[24] == 8);  // bit depth
    CHECK(blob[25] == 2);  // truecolor

    // The file ends with IEND, whose CRC is a published constant.
    REQUIRE(blob.size() >= 12);
    const size_t iend = blob.size() - 12;
    CHECK(be32(blob, iend) == 0);
    CHECK(std::string(blob.begin() + iend + 4, blob.begin() + iend + 8) == "IEND");
    CHECK(be32(blob, iend + 8) == 0xAE426082u);

    // Decode the stored-deflate stream and compare to the quantized rows.
    REQUIRE(std::string(blob.begin() + 37, blob.begin() + 41) == "IDAT");
    const std::uint32_t idat_len = be32(blob, 33);
    size_t pos = 41;
    CHECK(blob[pos] == 0x78);  // zlib header
    pos += 2;
    std::vector<unsigned char> raw;
    bool final_block = false;
    while (!final_block) {
        final_block = blob[pos] & 1;
        REQUIRE((blob[pos] & 0x06) == 0);  // stored, not compressed
        const std::uint32_t len = blob[pos + 1] | (std::uint32_t(blob[pos + 2]) << 8);
        const std::uint32_t nlen = blob[pos + 3] | (std::uint32_t(blob[pos + 4]) << 8);
        REQUIRE((len ^ nlen) == 0xFFFF);
        raw.insert(raw.end(), blob.begin() + pos + 5, blob.begin() + pos + 5 + len);
        pos += 5 + len;
    }
    // Trailer: 4 Adler bytes close out the declared IDAT payload.
    CHECK(pos + 4 == 41 + idat_len);

    // An independently coded Adler-32 over the scanlines must agree.
    std::uint32_t a = 1, b = 0;
    for (unsigned char x : raw) {
        a = (a + x) % 65521u;
        b = (b + a) % 65521u;
    }
    CHECK(be32(blob, pos) == ((b << 16) | a));

    REQUIRE(raw.size() == static_cast<size_t>(5) * (1 + 70 * 3));
    for (int y = 0; y < 5; ++y) {
        const size_t row = static_cast<size_t>(y) * (1 + 70 * 3);
        CHECK(raw[row] == 0);  // filter byte
        for (int x = 0; x < 70; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const double v = img.at(y, x, ch);
                const unsigned char want =
                    static_cast<unsigned char>(std::lround(v * 255.0));
                CHECK(raw[row + 1 + (x * 3 + ch)] == want);
            }
        }
    }
}

TEST_CASE("write_image dispatches on format and rejects others") {
    const dataio::ImageRecord img = test_image(2, 2);
    const std::string stem = (out_dir() / "dispatch").string();
    CHECK(image_io::write_image(stem, "ppm", img) == stem + ".ppm");
    CHECK(fs::exists(stem + ".ppm"));
    CHECK(image_io::write_image(stem, "png", img) == stem + ".png");
    CHECK(fs::exists(stem + ".png"));
    CHECK_THROWS_AS(image_io::write_image(stem, "bmp", img), Error);
}

TEST_CASE("grayscale images and bad paths fail loudly") {
    dataio::ImageRecord gray(2, 2, 1);
    const std::string stem = (out_dir() / "gray.ppm").string();
    try {
        image_io::write_ppm(stem, gray);
        FAIL("single-channel image accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
    try {
        image_io::write_ppm((out_dir() / "no_such_dir" / "x.ppm").string(), test_image(2, 2));
        FAIL("missing directory accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
}

TEST_CASE("the triptych copies visibles through and grays exactly the masked patches") {
    const int patch = 4;
    const dataio::ImageRecord img = test_image(8, 8);  // 2x2 patch grid
    dataio::PatchSequence seq = dataio::patchify(img, patch);
    REQUIRE(seq.tokens.rows == 4);

    masking::MaskPlan plan;
    plan.n_total = 4;
    plan.mask_ratio = 0.5;
    plan.visible_idx = {0, 3};
    plan.masked_idx = {1, 2};

    SUBCASE("a perfect prediction reproduces the input in the right panel") {
        // Feeding back the normalized targets must invert exactly through
        // the stored mean/denominator, patch by patch.
        const Mat perfect = dataio::normalize_targets(seq.tokens);
        const dataio::ImageRecord tri = image_io::triptych(img, plan, perfect, patch);
        REQUIRE(tri.h == 8);
        REQUIRE(tri.w == 24);
        REQUIRE(tri.c == 3);
        size_t bad = 0;
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                for (int ch = 0; ch < 3; ++ch) {
                    if (tri.at(y, x, ch) != img.at(y, x, ch)) ++bad;
                    if (std::abs(tri.at(y, x + 16, ch) - img.at(y, x, ch)) > 1e-12) ++bad;
                }
            }
        }
        CHECK(bad == 0);
    }

    SUBCASE("an arbitrary prediction only shows up under the mask") {
        Mat noise(4, seq.tokens.cols);
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < noise.cols; ++c) noise.at(r, c) = 0.1 * r - 0.35 * c;
        }
        const dataio::ImageRecord tri = image_io::triptych(img, plan, noise, patch);

        // Patch (0,0) is visible, patch (0,1) is masked (row-major order).
        size_t bad = 0;
        int gray = 0, changed = 0;
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                const bool masked = (y < 4 && x >= 4) || (y >= 4 && x < 4);
                for (int ch = 0; ch < 3; ++ch) {
                    if (tri.at(y, x, ch) != img.at(y, x, ch)) ++bad;  // left: always input
                    const double mid = tri.at(y, x + 8, ch);
                    const double right = tri.at(y, x + 16, ch);
                    if (masked) {
                        gray += mid == 0.5 ? 1 : 0;
                        changed += right != img.at(y, x, ch) ? 1 : 0;
                    } else {
                        // visible: both panels copy the input bitwise
                        if (mid != img.at(y, x, ch)) ++bad;
                        if (right != img.at(y, x, ch)) ++bad;
                    }
                }
            }
        }
        CHECK(bad == 0);
        CHECK(gray == 2 * patch * patch * 3);     // exactly the masked patches
        CHECK(changed == 2 * patch * patch * 3);  // prediction departs everywhere under the mask
    }

    SUBCASE("shape mismatches are rejected") {
        Mat wrong(5, seq.tokens.cols);
        CHECK_THROWS_AS(image_io::triptych(img, plan, wrong, patch), Error);
        masking::MaskPlan off = plan;
        off.n_total = 16;
        const Mat ok(4, seq.tokens.cols);
        CHECK_THROWS_AS(image_io::triptych(img, off, ok, patch), Error);
    }
}
