#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fdanet/tensor.hpp"

namespace fdanet {

/// Layout shared by checkpoints ("FDAT1") and raw tensor files ("FRAW1"):
///
///   magic (5 ASCII bytes)
///   u64 little-endian byte length of the JSON header
///   JSON header
///   little-endian f32 payload
struct FramedFile {
  std::string magic;
  std::string header_json;
  std::vector<float> payload;
};

void write_framed(const std::filesystem::path& path, const FramedFile& file);

/// Throws IoError if unreadable, FormatError (with byte offset) if the magic,
/// header length, or payload size is wrong.
FramedFile read_framed(const std::filesystem::path& path, const std::string& expected_magic);

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Named f32 tensors plus an opaque JSON metadata object.
struct Checkpoint {
  std::string metadata_json = "{}";
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

inline constexpr const char* kCheckpointMagic = "FDAT1";

/// Header: {"format":"FDAT1","dtype":"f32","tensors":[{name,shape,dtype}...],
///          "metadata":{...}}; payload in header order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fdanet
