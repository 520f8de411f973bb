#pragma once

#include <string>

#include "diae/params.hpp"

namespace diae {

// Checkpoint container format:
//   magic "DIAE"
//   u32 LE format version
//   u32 LE config blob length, then the config text (same grammar as config
//   files)
//   records until EOF: u32 LE name length, name bytes, u32 LE rank,
//   u32 LE extents[rank], then raw little-endian 32-bit floats.
struct CheckpointData {
    std::string config_text;
    ParamStore<float> tensors; // file order
};

constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamStore<float>& tensors);
CheckpointData load_checkpoint(const std::string& path);

} // namespace diae
