#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdmae {

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure surfaced by the library carries a kind so the
// CLI can map it to a stable exit code (config=2, data=3, numeric=4, io=5).
// ---------------------------------------------------------------------------
enum class ErrorKind {
    Config,     // bad configuration / invariant violation / dimension mismatch
    Data,       // malformed input data (file format, label range, ...)
    Numeric,    // NaN/Inf or other numeric failure
    Io,         // filesystem / serialization failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorKind::Data, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorKind::Io, msg); }

// ---------------------------------------------------------------------------
// Mat: dense row-major matrix of doubles. The whole project runs in double
// precision so finite-difference gradient checks and bit-exact reruns hold.
// ---------------------------------------------------------------------------
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    size_t size() const { return data.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// FNV-1a 64-bit. Used for config hashes, seed derivation and golden checksums.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// splitmix64 step; handy for deriving independent seeds from (seed, tag) pairs.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index = 0) {
    return mix64(mix64(seed ^ 0x5851f42d4c957f2dull) ^ mix64(stream) ^ index * 0x9e3779b97f4a7c15ull);
}

}  // namespace sdmae
