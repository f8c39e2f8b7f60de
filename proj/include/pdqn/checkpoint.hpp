#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdqn/features.hpp"
#include "pdqn/qnet.hpp"

namespace pdqn {

/// On-disk layout (little-endian):
///   "QNET1" | u32 layer count | u32 dims[count] |
///   per layer: f64 weights (row-major), f64 biases |
///   f64 scaler means[dims[0]-1] | f64 scaler stds[dims[0]-1] | u32 fingerprint
struct Checkpoint {
  QNet net;
  Scaler scaler;
  std::uint32_t fingerprint = 0;
};

inline constexpr char kCheckpointMagic[] = "QNET1";

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary file and renames, so readers never observe a
/// partial checkpoint.
void save_checkpoint(const QNet& net, const Scaler& scaler, std::uint32_t fingerprint,
                     const std::filesystem::path& path);

/// Throws FormatError on bad magic, truncation or trailing bytes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pdqn
