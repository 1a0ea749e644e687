#pragma once

#include <filesystem>

#include "ddic/dec.hpp"

namespace ddic {

// Binary model file: magic, format version, architecture, then every tensor
// of ModelParams::tensors() as (rows, cols, row-major doubles). Integers and
// doubles are stored little-endian, so files move between machines.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);

// Throws IoError if the file cannot be read, FormatError on a bad magic,
// unknown version, truncation or tensor shapes that contradict the stored
// architecture.
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ddic
