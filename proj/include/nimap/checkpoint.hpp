#pragma once

#include "nimap/config.hpp"
#include "nimap/submaps.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace nimap {

inline constexpr int kCheckpointVersion = 1;

/// A checkpoint is a directory:
///   manifest.json   format tag, version, config hash, intrinsics, run config,
///                   per-file FNV-1a checksums, anchor poses as quaternions
///   submap_NNNN.bin anchor, members, grid chunk, two decoder chunks
///   keyframes.bin   id, frame index, timestamp, estimated and true pose
/// Poses inside binary chunks are stored as raw 3x4 matrices so a reload
/// reproduces renders bit for bit. Keyframe images and optimizer moments are
/// not stored.
void save_checkpoint(const std::string& dir, const RunConfig& config, const SubmapAtlas& atlas);

struct LoadedCheckpoint {
  RunConfig config;
  std::uint64_t config_hash = 0;
  std::unique_ptr<SubmapAtlas> atlas;
};

/// Throws io::FormatError on a missing file, version mismatch or checksum
/// mismatch.
LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace nimap
