#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "title_forge/model.hpp"

namespace title_forge {

/// On-disk layout:
///   line 1  "title_forge_checkpoint 1"
///   line 2  byte length of the manifest
///   manifest (JSON: config, tensors[{name, shape, offset, bytes}], data_bytes, crc32)
///   tensor data, little-endian float32, in manifest order
/// Saving then loading reproduces every value bit for bit.
void save_checkpoint(const std::filesystem::path& path, const Transformer& model);

/// Throws Error(BadCheckpoint) on any structural or checksum mismatch.
Transformer load_checkpoint(const std::filesystem::path& path);

/// Stable identifier for a checkpoint file: "<stem>-<crc32 hex>".
std::string checkpoint_id(const std::filesystem::path& path);

}  // namespace title_forge
