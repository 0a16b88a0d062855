#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "coboom/config.hpp"
#include "coboom/model.hpp"

namespace coboom {

// File layout, all integers little-endian:
//   "COBOOMCK" | u64 manifest length | manifest JSON | u64 blob length | blob | u32 CRC32(blob)
// The manifest holds format_version, the run configuration and, per parameter,
// its shape, byte offset into the blob and dtype ("f64le").
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ModelState state;
};

std::string serialize_checkpoint(const ModelState& state, const RunConfig& config);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "checkpoint");

void save_checkpoint(const ModelState& state, const RunConfig& config, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace coboom
