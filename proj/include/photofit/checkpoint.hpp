// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "photofit/model.hpp"

namespace photofit {

/// Bad magic, unknown version, truncation or checksum mismatch.
class CheckpointCorrupt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary layout, all integers u32 little-endian:
///   "NPFC" version kind_len kind count
///   count x { name_len name rank dims[rank] f32 data }
///   crc32 of every preceding byte
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::string kind;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Model state plus its meta tensors.
Checkpoint checkpoint_of(Model& m);
/// Restores state after checking kind and meta; throws ConfigError on mismatch.
void apply_checkpoint(const Checkpoint& c, Model& m);

/// Written to a temporary sibling and renamed into place.
void save_checkpoint(const std::filesystem::path& path, Model& m);
void load_checkpoint(const std::filesystem::path& path, Model& m);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace photofit
