#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdmae/common.hpp"

namespace sdmae::checkpoint {

// Everything needed to continue a run bit-for-bit: parameters, optimizer
// moments, where the schedule stood, and the exact generator state.
struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;

    std::vector<std::pair<std::string, Mat>> model_params;
    std::vector<std::pair<std::string, Mat>> opt_state;
    std::int64_t epoch = 0;       // epochs fully completed
    std::int64_t step = 0;        // global gradient steps taken
    std::uint64_t config_hash = 0;  // guards resume against a changed config
    std::string rng_state;        // serialized generator

    const Mat* find_param(const std::string& name) const;
};

// Binary layout: magic "SDMAE\0", u32 format version, u64 checksum of the
// body, then the body (scalars, rng blob, and two length-prefixed
// name->tensor sections; doubles little-endian).
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sdmae::checkpoint
