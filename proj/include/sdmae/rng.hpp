#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sdmae/common.hpp"

namespace sdmae {

// ---------------------------------------------------------------------------
// Rng: mt19937_64 engine with hand-rolled distributions.
//
// std:: distributions are implementation-defined, so every draw here is built
// from raw engine output only. That makes streams reproducible across stdlib
// versions and lets checkpoints serialize the exact generator position.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection sampling.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) throw_config("uniform_int: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (no cached spare: keeps state = engine state).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Truncated normal: resample outside [-bound, bound] standard deviations.
    double truncated_normal(double stddev, double bound = 2.0) {
        double z;
        do {
            z = normal();
        } while (z < -bound || z > bound);
        return z * stddev;
    }

    // Fisher-Yates; std::shuffle's engine usage is unspecified, this one is pinned.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (is.fail()) throw_data("rng state: malformed serialized generator");
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace sdmae
