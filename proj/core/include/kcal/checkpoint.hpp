#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kcal/tensor.hpp"

namespace kcal {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// "KCKP", version byte 0x01, u32 tensor count, then per tensor: u32 name
/// length, UTF-8 name, u32 rank, rank x u32 extents, f32 values (all
/// little-endian). A trailing block holds u32 length + UTF-8 JSON config.
struct Checkpoint {
  std::vector<CheckpointTensor> tensors;
  std::string config_json = "{}";

  const CheckpointTensor* find(const std::string& name) const;

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(const std::vector<std::uint8_t>& bytes);

  /// Writes to a temporary sibling and renames, so a crash never leaves a
  /// truncated checkpoint behind.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace kcal
