#pragma once

// Versioned binary checkpoint container:
//   bytes 0..3  magic "TRKC"
//   bytes 4..5  version (u16), currently 1
//   bytes 6..9  manifest length in bytes (u32)
//   manifest    JSON: training config, epoch, input dimension, optimizer
//               step, and the shape list of every stored tensor
//   payload     tensors as IEEE-754 32-bit little-endian, row-major, in
//               manifest order

#include <filesystem>

#include "lftd/model.hpp"

namespace lftd {

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lftd
