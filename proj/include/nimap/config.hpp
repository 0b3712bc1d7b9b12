#pragma once

#include "nimap/geometry.hpp"
#include "nimap/scene_oracle.hpp"
#include "nimap/submaps.hpp"
#include "nimap/tracking_sim.hpp"

#include <cstdint>
#include <string>

#include "json.hpp"

namespace nimap {

using Json = nlohmann::json;

inline constexpr int kConfigVersion = 1;

struct TrackingConfig {
  KeyframeThresholds keyframe;
  LoopParams loop;
  double loop_weight = 10.0;  // information weight of loop edges
  int max_keyframes = 0;      // stop after this many keyframes; 0 = whole trajectory
};

struct EvalConfig {
  int views = 20;
  std::uint64_t seed = 101;
};

/// Everything a run needs. Serialized as JSON; unknown keys are rejected and
/// missing keys keep the defaults below.
struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 1;
  std::string output_dir = "nimap_out";
  int threads = 1;
  Intrinsics camera;
  SceneSpec scene;
  TrajectoryConfig trajectory;
  TrackingConfig tracking;
  AtlasConfig atlas;
  EvalConfig eval;

  /// Range checks on every section; throws std::invalid_argument.
  void validate() const;
};

/// Propagates the master seed into trajectory, field and evaluation seeds.
void apply_seed(RunConfig& config, std::uint64_t seed);
void apply_threads(RunConfig& config, int threads);

RunConfig config_from_json(const Json& j);
Json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& config);

Json scene_to_json(const SceneSpec& scene);
/// FNV-1a of the canonical JSON text of the scene section.
std::uint64_t scene_hash(const SceneSpec& scene);
std::string hex64(std::uint64_t value);

/// 6 x 6 x 3 m room, four laps of a rectangular path looking at the walls.
RunConfig default_room_config();
/// Unit sphere circled by an inward-looking camera.
RunConfig default_sphere_config();

}  // namespace nimap
