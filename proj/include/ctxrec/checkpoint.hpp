#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ctxrec/numerics.hpp"

namespace ctxrec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Self-describing binary model file.
///
/// Layout (all integers and floats little-endian):
///   "CTXRCKPT" | u32 version | u32 len, kind | u64 len, config JSON |
///   u32 tensor count | per tensor: u32 len, name, u64 rows, u64 cols, f64[rows*cols] |
///   u32 CRC-32 of every preceding byte
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string kind;
  std::string config_json;
  TensorList tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws DataError on a bad magic, unsupported version, truncation or checksum mismatch.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// The trailing CRC-32 of the serialized form.
std::uint32_t checkpoint_checksum(const Checkpoint& checkpoint);

/// CRC-32 of a byte string, written as 8 lowercase hex digits.
std::string crc32_hex(const std::string& bytes);

}  // namespace ctxrec
