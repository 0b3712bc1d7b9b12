#pragma once

#include "nimap/frame.hpp"
#include "nimap/renderer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <unordered_set>
#include <vector>

namespace nimap {

struct SubmapParams {
  double covis_threshold = 0.85;          // coverage needed to reuse a submap
  double anchor_covis_threshold = 0.5;    // overlap with the active anchor needed to extend it
  double ft_translation = 0.01;           // m
  double ft_rotation = 0.5 * M_PI / 180;  // rad
  int finetune_budget = 50;               // train steps per touched submap
  int iters_per_keyframe = 10;
  int iters_new_submap = 100;             // steps for the keyframe that creates a submap
  int window = 5;                         // keyframes per training batch
  int growth_stride = 1;                  // pixel stride for octree growth
  /// Each depth point also allocates the leaves touched by a cube of this
  /// half-width (in leaf sizes) around it, closing gaps between pixels.
  double growth_dilation = 0.5;
  int covis_stride = 2;                   // pixel stride for coverage tests
};

struct AtlasConfig {
  FieldConfig field;
  SubmapParams submap;
  TrainParams train;
  RenderParams render;
};

/// One neural field expressed in the frame of its anchor keyframe.
struct Submap {
  int id = 0;
  int anchor_kf_id = 0;
  Pose anchor_pose;  // world <- anchor
  NeuralField field;
  std::vector<int> members;
  /// Member pose relative to the anchor as of its last training pass.
  std::map<int, Pose> trained_relative;
  /// Leaf keys hit by the anchor keyframe's (dilated) depth points.
  std::unordered_set<std::uint64_t> anchor_leaves;
  double training_seconds = 0.0;

  Submap(int id, int anchor_kf_id, const Pose& anchor_pose, const FieldConfig& config);
  Submap(int id, int anchor_kf_id, const Pose& anchor_pose, NeuralField field);

  /// Camera pose expressed in the anchor frame, rounded to a fixed lattice.
  Pose camera_in_anchor(const Pose& camera_world) const;
};

class SubmapAtlas {
 public:
  explicit SubmapAtlas(const AtlasConfig& config);

  const AtlasConfig& config() const { return config_; }
  std::vector<Submap>& submaps() { return submaps_; }
  const std::vector<Submap>& submaps() const { return submaps_; }
  Submap& submap(int id);
  const Submap& submap(int id) const;
  int active_submap() const { return active_; }
  void set_active_submap(int id) { active_ = id; }

  /// Keyframes are stored by id; images are kept for fine-tuning.
  std::map<int, Keyframe>& keyframes() { return keyframes_; }
  const std::map<int, Keyframe>& keyframes() const { return keyframes_; }
  const Keyframe& keyframe(int id) const;
  /// Submap id owning keyframe `id`.
  int owner(int kf_id) const;
  const std::map<int, int>& assignment() const { return assignment_; }
  /// Per keyframe: coverage fraction of every submap that existed at intake.
  const std::map<int, std::vector<double>>& covisibility() const { return covisibility_; }

  std::size_t total_nodes() const;
  Submap& create_submap(const Keyframe& anchor);
  void assign(int kf_id, int submap_id);
  void record_covisibility(int kf_id, std::vector<double> coverage) { covisibility_[kf_id] = std::move(coverage); }
  void add_keyframe(Keyframe kf);

 private:
  AtlasConfig config_;
  std::vector<Submap> submaps_;
  std::map<int, Keyframe> keyframes_;
  std::map<int, int> assignment_;
  std::map<int, std::vector<double>> covisibility_;
  int active_ = -1;
};

/// Fraction of world points that fall inside allocated leaves of `submap`.
double submap_coverage(const Submap& submap, const std::vector<Vec3>& world_points);
/// Fraction of world points inside any allocated leaf of any submap.
double union_coverage(const SubmapAtlas& atlas, const std::vector<Vec3>& world_points);
/// Fraction of world points whose leaf was hit by the anchor keyframe.
double anchor_covisibility(const Submap& submap, const std::vector<Vec3>& world_points);

enum class SelectionReason { created_first, reused_best, reused_union, extended_active, created_new };

struct Selection {
  int submap_id = -1;
  bool created = false;
  SelectionReason reason = SelectionReason::created_first;
  std::vector<double> coverage;  // per existing submap
};

/// Picks the submap for `kf`, creating a new one anchored at kf when the view
/// is neither covered by the existing map nor overlapping the active anchor.
/// The keyframe must already be stored in the atlas.
Selection select_local_map(SubmapAtlas& atlas, const Keyframe& kf);

/// Inserts the keyframe's depth points into `submap`, skipping points that
/// already fall in an allocated leaf of another submap.
InsertResult grow_submap(SubmapAtlas& atlas, Submap& submap, const Keyframe& kf);

struct IntegrationReport {
  int keyframe_id = 0;
  int submap_id = -1;
  bool created = false;
  SelectionReason reason = SelectionReason::created_first;
  std::size_t new_nodes = 0;
  LossReport loss;
  double seconds = 0.0;
};

/// Stores the keyframe, selects its submap, grows the octree and runs the
/// configured number of training steps on a window of member keyframes.
IntegrationReport integrate_keyframe(SubmapAtlas& atlas, Keyframe kf, std::mt19937_64& rng);

/// Writes updated keyframe poses and moves every anchor to its keyframe's
/// new pose. Grids and decoders are untouched. Throws std::out_of_range when
/// an anchor keyframe has no updated pose. Returns the number of anchors
/// that moved.
int adjust_submaps(SubmapAtlas& atlas, const std::map<int, Pose>& updated_poses);

struct FinetuneReport {
  int submap_id = -1;
  int iterations = 0;
  LossReport loss;
  double seconds = 0.0;
};

/// Re-grows and retrains submaps whose members moved relative to their
/// anchor beyond the fine-tune threshold since their last training.
std::vector<FinetuneReport> finetune_submaps(SubmapAtlas& atlas, int budget, std::mt19937_64& rng);

/// Whether the member poses of `submap` changed beyond the fine-tune threshold.
bool needs_finetune(const SubmapAtlas& atlas, const Submap& submap);

struct FusedView {
  ColorImage color;
  DepthImage depth;
  ScalarImage uncertainty;
  Image<int> winner;  // submap id per pixel, -1 where nothing was observed
  std::vector<int> candidates;
};

/// Conservative test: false only if all corners of `box` lie outside one
/// plane of the view frustum.
bool box_in_frustum(const Aabb& box, const Pose& camera_in_box_frame, const Intrinsics& intr, double t_max);

/// Per-pixel minimum-uncertainty fusion of the candidate submaps' renders.
FusedView render_fused(const SubmapAtlas& atlas, const Pose& camera_world, const Intrinsics& intr);

struct FieldQuery {
  double occupancy = 0.0;
  Vec3 color = Vec3::Zero();
  double uncertainty = kUnobservedVariance;
  int submap_id = -1;
};

/// Occupancy and color from the covering submap with the lowest o(1 - o);
/// nullopt when no submap has an allocated leaf at p.
std::optional<FieldQuery> fused_query(const SubmapAtlas& atlas, const Vec3& world_point);

}  // namespace nimap
