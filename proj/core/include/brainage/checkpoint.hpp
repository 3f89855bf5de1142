#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "brainage/training.hpp"

namespace brainage::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: "BAGE", u32 version, u64 metadata length, UTF-8 JSON
/// metadata (architecture, training metadata, parameter manifest with name,
/// shape and byte offset), then the little-endian float32 blobs in manifest
/// order. Parameters come first, batchnorm running statistics after.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
/// FormatError on bad magic, unsupported version, malformed metadata or
/// truncation ("unexpected end of checkpoint"); ShapeError when the manifest
/// disagrees with the architecture.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace brainage::model
