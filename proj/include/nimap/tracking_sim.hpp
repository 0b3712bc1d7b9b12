#pragma once

#include "nimap/geometry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace nimap {

struct Waypoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;    // radians, about world +z
  double pitch = 0.0;  // radians, positive looks up
};

struct DriftModel {
  double sigma_t = 0.002;       // m per frame
  double sigma_r = 0.0;         // rad per frame
  Vec6 bias = Vec6::Zero();     // per-frame body-frame twist (rho, phi)
};

struct TrajectoryConfig {
  std::vector<Waypoint> waypoints;
  bool closed = true;           // return to the first waypoint at the end of each lap
  int laps = 1;
  double speed = 0.3;           // m/s
  double angular_speed = 0.6;   // rad/s
  double rate_hz = 10.0;
  DriftModel drift;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Ground-truth poses sampled at `rate_hz` along straight segments between
/// waypoints; yaw takes the shorter way round. Each segment lasts as long as
/// the slower of its translation and rotation.
std::vector<Pose> interpolate_trajectory(const TrajectoryConfig& config);

struct FrameSample {
  int index = 0;
  double timestamp = 0.0;
  Pose gt;
  Pose estimate;
};

/// Replays the ground-truth trajectory and a drifting odometry estimate:
/// each ground-truth increment is perturbed by exp(noise + bias) in the body
/// frame before being chained onto the previous estimate.
class TrajectoryModel {
 public:
  explicit TrajectoryModel(const TrajectoryConfig& config);

  std::size_t frame_count() const { return gt_.size(); }
  bool exhausted() const { return next_ >= gt_.size(); }
  const std::vector<Pose>& ground_truth() const { return gt_; }

  /// Throws std::out_of_range when exhausted.
  FrameSample next_frame();
  /// Replaces the estimate of the most recent frame (after a correction);
  /// later increments chain from it.
  void correct_estimate(const Pose& corrected);
  const Pose& last_estimate() const { return estimate_; }

 private:
  TrajectoryConfig config_;
  std::vector<Pose> gt_;
  std::size_t next_ = 0;
  Pose estimate_;
  std::mt19937_64 rng_;
};

struct KeyframeThresholds {
  double translation = 0.2;             // m
  double rotation = 10.0 * M_PI / 180;  // rad
};

/// True when the relative motion exceeds either threshold. With no previous
/// keyframe the first frame always qualifies.
bool is_keyframe(const std::optional<Pose>& previous_keyframe, const Pose& current, const KeyframeThresholds& th);

struct LoopParams {
  double radius = 0.5;                  // m
  double angle = 20.0 * M_PI / 180;     // rad
  int window = 20;                      // most recent keyframes excluded
};

/// Oldest keyframe index within radius and angle of `current`, ignoring the
/// last `window` entries of `history` (which holds ground-truth poses of the
/// keyframes before the current one).
std::optional<int> detect_loop(const Pose& current, std::span<const Pose> history, const LoopParams& params);

enum class EdgeKind { odometry, loop };

struct PoseGraphEdge {
  int from = 0;
  int to = 0;
  Pose measurement;  // expected T_from^-1 T_to
  double weight = 1.0;
  EdgeKind kind = EdgeKind::odometry;
};

class PoseGraph {
 public:
  void add_node(int id, const Pose& estimate);
  void add_edge(const PoseGraphEdge& edge);
  void set_pose(int id, const Pose& pose);

  const std::map<int, Pose>& nodes() const { return nodes_; }
  const std::vector<PoseGraphEdge>& edges() const { return edges_; }
  const Pose& pose(int id) const;
  bool contains(int id) const { return nodes_.count(id) != 0; }
  /// The gauge-fixed node: the smallest id.
  int gauge() const;
  bool connected() const;
  /// Sum over edges of weight * |log(Z^-1 Ti^-1 Tj)|^2.
  double cost() const;

 private:
  std::map<int, Pose> nodes_;
  std::vector<PoseGraphEdge> edges_;
};

struct PoseGraphOptions {
  int max_iterations = 100;
  double min_decrease = 1e-9;   // stop when the residual norm drops by less
  double initial_damping = 1e-6;
};

struct PoseGraphResult {
  double initial_residual = 0.0;  // sqrt(cost)
  double final_residual = 0.0;
  int iterations = 0;
  int rejected_steps = 0;
};

/// Damped Gauss-Newton on SE(3) with right perturbations; the gauge node is
/// held fixed. Throws std::invalid_argument for an empty or disconnected
/// graph and std::runtime_error when the normal equations stay singular.
PoseGraphResult optimize_pose_graph(PoseGraph& graph, const PoseGraphOptions& options = {});

}  // namespace nimap
