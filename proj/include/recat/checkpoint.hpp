#pragma once

#include <string>

#include "recat/config.hpp"
#include "recat/denoiser.hpp"
#include "recat/dreamtrain.hpp"

namespace recat {

struct Checkpoint {
    RunConfig config;
    TinyUNetParams params;
    AdamWState optimizer;  // step counter included
};

// "RCVT" file: u32 version, u64 header length, JSON header (config snapshot,
// step, tensor manifest with name/shape/offset), f64 payload, CRC32 of all
// preceding bytes; little-endian.
std::string encode_checkpoint(const TinyUNetParams& params, const AdamWState& optimizer,
                              const RunConfig& config);
/// Throws FormatError for malformed data and CrcMismatch for corrupted bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const TinyUNetParams& params, const AdamWState& optimizer, const RunConfig& config,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace recat
