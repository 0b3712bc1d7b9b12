#pragma once

#include "nimap/config.hpp"
#include "nimap/metrics.hpp"
#include "nimap/submaps.hpp"
#include "nimap/tracking_sim.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nimap {

struct KeyframeLog {
  IntegrationReport report;
  int frame_index = 0;
  std::size_t submaps = 0;
  std::size_t nodes = 0;
  bool relocalized = false;
};

struct LoopEvent {
  int keyframe_id = 0;
  int match_id = 0;
  int frame_index = 0;
  double optimize_seconds = 0.0;
  double adjust_seconds = 0.0;
  double finetune_seconds = 0.0;
  int anchors_moved = 0;
  int submaps_finetuned = 0;
  double ate_before_cm = 0.0;
  double ate_after_cm = 0.0;
  /// Cumulative training time of the submaps whose anchors moved, taken
  /// before fine-tuning.
  double affected_training_seconds = 0.0;
  std::size_t submaps_at_closure = 0;
  std::size_t nodes_at_closure = 0;
};

enum class LoopStage { before_adjust, after_adjust, after_finetune };

struct PipelineObserver {
  std::function<void(const SubmapAtlas&, const KeyframeLog&)> on_keyframe;
  std::function<void(LoopStage, const SubmapAtlas&, const LoopEvent&)> on_loop;
};

struct EvalView {
  int frame_index = 0;
  ViewRecord record;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalView> views;
  double depth_l1_cm = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double mean_uncertainty = 0.0;
  std::optional<double> ate_cm;
  std::optional<UncertaintyCorrelation> correlation;
};

struct RunResult {
  std::unique_ptr<SubmapAtlas> atlas;
  std::vector<KeyframeLog> keyframes;
  std::vector<LoopEvent> loops;
  PoseGraph graph;
  std::vector<FrameSample> frames;  // every frame consumed from the tracker
  std::optional<EvalReport> eval;
};

/// Tracking simulation, keyframe intake, local mapping, loop closing with
/// two-stage correction and, when config.eval.views > 0, evaluation.
/// Module errors are rethrown as std::runtime_error naming the keyframe.
RunResult run_pipeline(const RunConfig& config, const PipelineObserver& observer = {});

/// `count` distinct non-keyframe frame indices in [0, last_frame], drawn with
/// `seed`. Falls back to keyframe frames when too few remain.
std::vector<int> sample_eval_frames(int last_frame, const std::vector<int>& keyframe_frames, int count,
                                    std::uint64_t seed);

/// Pose of each frame in the map's frame: the latest keyframe at or before
/// the frame, composed with the ground-truth motion from that keyframe.
/// Frames before the first keyframe use the first keyframe.
std::vector<Pose> map_frame_poses(const SubmapAtlas& atlas, std::span<const Pose> ground_truth,
                                  std::span<const int> frame_indices);

/// Renders the fused map at `map_poses` and compares against the scene
/// oracle rendered at the matching ground-truth poses.
EvalReport evaluate_views(const SubmapAtlas& atlas, const RunConfig& config, std::span<const Pose> gt_poses,
                          std::span<const Pose> map_poses, std::span<const int> frame_indices);

/// Keyframe ATE of the atlas pose table in centimeters (needs >= 3 keyframes).
std::optional<double> keyframe_ate(const SubmapAtlas& atlas);

Json eval_to_json(const EvalReport& report);

// Command entry points. Each writes under `out_dir` and returns a JSON
// summary; errors propagate as exceptions.
Json cmd_simulate(const RunConfig& config, const std::string& out_dir);
Json cmd_run(const RunConfig& config, const std::string& out_dir);
Json cmd_render(const std::string& checkpoint, const std::string& poses_file, const std::string& out_dir);
Json cmd_mesh(const std::string& checkpoint, int resolution, const std::string& out_dir);
Json cmd_eval(const std::string& checkpoint, const RunConfig& config, const std::string& out_dir);

}  // namespace nimap
