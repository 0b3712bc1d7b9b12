#include "nimap/pipeline.hpp"

#include "nimap/checkpoint.hpp"
#include "nimap/image_io.hpp"
#include "nimap/mesh.hpp"
#include "nimap/scene_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace nimap {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string frame_name(const char* prefix, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d.%s", prefix, index, ext);
  return buf;
}

const char* reason_name(SelectionReason r) {
  switch (r) {
    case SelectionReason::created_first:
      return "created_first";
    case SelectionReason::reused_best:
      return "reused_best";
    case SelectionReason::reused_union:
      return "reused_union";
    case SelectionReason::extended_active:
      return "extended_active";
    case SelectionReason::created_new:
      return "created_new";
  }
  return "unknown";
}

std::vector<Pose> graph_poses(const PoseGraph& g) {
  std::vector<Pose> out;
  for (const auto& [id, p] : g.nodes()) out.push_back(p);
  return out;
}

Json keyframe_json(const KeyframeLog& k) {
  return {{"keyframe", k.report.keyframe_id},
          {"frame", k.frame_index},
          {"submap", k.report.submap_id},
          {"created", k.report.created},
          {"selection", reason_name(k.report.reason)},
          {"new_nodes", k.report.new_nodes},
          {"integration_seconds", k.report.seconds},
          {"loss", k.report.loss.total},
          {"submaps", k.submaps},
          {"nodes", k.nodes},
          {"relocalized", k.relocalized}};
}

Json loop_json(const LoopEvent& e) {
  return {{"event", "loop"},
          {"keyframe", e.keyframe_id},
          {"match", e.match_id},
          {"frame", e.frame_index},
          {"optimize_seconds", e.optimize_seconds},
          {"adjust_seconds", e.adjust_seconds},
          {"finetune_seconds", e.finetune_seconds},
          {"anchors_moved", e.anchors_moved},
          {"submaps_finetuned", e.submaps_finetuned},
          {"ate_before_cm", e.ate_before_cm},
          {"ate_after_cm", e.ate_after_cm},
          {"affected_training_seconds", e.affected_training_seconds},
          {"submaps_at_closure", e.submaps_at_closure},
          {"nodes_at_closure", e.nodes_at_closure}};
}

std::vector<TrajectoryRecord> keyframe_records(const SubmapAtlas& atlas, bool ground_truth) {
  std::vector<TrajectoryRecord> out;
  for (const auto& [id, kf] : atlas.keyframes()) out.push_back({kf.timestamp, ground_truth ? kf.gt_pose : kf.pose});
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory '" + dir + "'");
}

}  // namespace

std::vector<int> sample_eval_frames(int last_frame, const std::vector<int>& keyframe_frames, int count,
                                    std::uint64_t seed) {
  std::set<int> kf(keyframe_frames.begin(), keyframe_frames.end());
  std::vector<int> pool;
  for (int f = 0; f <= last_frame; ++f) {
    if (!kf.count(f)) pool.push_back(f);
  }
  if (static_cast<int>(pool.size()) < count) {
    for (int f : keyframe_frames) {
      if (f <= last_frame) pool.push_back(f);
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(count, 0))));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<Pose> map_frame_poses(const SubmapAtlas& atlas, std::span<const Pose> ground_truth,
                                  std::span<const int> frame_indices) {
  if (atlas.keyframes().empty()) throw std::invalid_argument("map_frame_poses: no keyframes");
  std::map<int, const Keyframe*> by_frame;
  for (const auto& [id, kf] : atlas.keyframes()) by_frame[kf.frame_index] = &kf;
  std::vector<Pose> out;
  for (int f : frame_indices) {
    if (f < 0 || static_cast<std::size_t>(f) >= ground_truth.size()) {
      throw std::out_of_range("map_frame_poses: frame " + std::to_string(f) + " outside the trajectory");
    }
    auto it = by_frame.upper_bound(f);
    const Keyframe& ref = it == by_frame.begin() ? *by_frame.begin()->second : *std::prev(it)->second;
    out.push_back(ref.pose * (ref.gt_pose.inverse() * ground_truth[static_cast<std::size_t>(f)]));
  }
  return out;
}

EvalReport evaluate_views(const SubmapAtlas& atlas, const RunConfig& config, std::span<const Pose> gt_poses,
                          std::span<const Pose> map_poses, std::span<const int> frame_indices) {
  if (gt_poses.size() != frame_indices.size() || map_poses.size() != frame_indices.size()) {
    throw std::invalid_argument("evaluate_views: size mismatch");
  }
  EvalReport report;
  std::vector<double> l1, ps, ss, un;
  for (std::size_t i = 0; i < gt_poses.size(); ++i) {
    const GroundTruthFrame gt = render_gt_frame(config.scene, gt_poses[i], config.camera);
    const FusedView view = render_fused(atlas, map_poses[i], config.camera);
    const MaskImage mask = valid_depth_mask(gt.depth);
    EvalView ev;
    ev.frame_index = frame_indices[i];
    ev.record.depth_l1_cm = depth_l1(view.depth, gt.depth, mask);
    ev.record.psnr_db = psnr(view.color, gt.color);
    ev.record.mean_uncertainty = mean(view.uncertainty.data);
    ev.ssim = ssim(view.color, gt.color);
    l1.push_back(ev.record.depth_l1_cm);
    ps.push_back(ev.record.psnr_db);
    ss.push_back(ev.ssim);
    un.push_back(ev.record.mean_uncertainty);
    report.views.push_back(ev);
  }
  report.depth_l1_cm = mean(l1);
  report.psnr_db = mean(ps);
  report.ssim = mean(ss);
  report.mean_uncertainty = mean(un);
  if (report.views.size() >= 4) {
    std::vector<ViewRecord> records;
    for (const auto& v : report.views) records.push_back(v.record);
    try {
      report.correlation = uncertainty_correlation(records);
    } catch (const std::domain_error&) {
      // Constant columns have no rank correlation; leave it unset.
    }
  }
  report.ate_cm = keyframe_ate(atlas);
  return report;
}

std::optional<double> keyframe_ate(const SubmapAtlas& atlas) {
  if (atlas.keyframes().size() < 3) return std::nullopt;
  std::vector<Pose> est, gt;
  for (const auto& [id, kf] : atlas.keyframes()) {
    est.push_back(kf.pose);
    gt.push_back(kf.gt_pose);
  }
  return ate_rmse(est, gt);
}

Json eval_to_json(const EvalReport& r) {
  Json views = Json::array();
  for (const auto& v : r.views) {
    views.push_back({{"frame", v.frame_index},
                     {"depth_l1_cm", v.record.depth_l1_cm},
                     {"psnr_db", v.record.psnr_db},
                     {"ssim", v.ssim},
                     {"mean_uncertainty", v.record.mean_uncertainty}});
  }
  Json j = {{"views", views},
            {"depth_l1_cm", r.depth_l1_cm},
            {"psnr_db", r.psnr_db},
            {"ssim", r.ssim},
            {"mean_uncertainty", r.mean_uncertainty}};
  j["ate_rmse_cm"] = r.ate_cm ? Json(*r.ate_cm) : Json(nullptr);
  if (r.correlation) {
    j["spearman_uncertainty_depth_l1"] = r.correlation->rho_depth;
    j["spearman_uncertainty_psnr"] = r.correlation->rho_psnr;
  }
  return j;
}

RunResult run_pipeline(const RunConfig& config, const PipelineObserver& observer) {
  config.validate();
  RunResult result;
  result.atlas = std::make_unique<SubmapAtlas>(config.atlas);
  SubmapAtlas& atlas = *result.atlas;
  TrajectoryModel model(config.trajectory);
  std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ULL + 3);
  std::mt19937_64 noise_rng(config.seed + 29);
  PoseGraph& graph = result.graph;

  std::vector<Pose> history_gt;
  std::optional<Pose> last_kf_pose;
  int closed_upto = -1;
  int kf_count = 0;

  while (!model.exhausted()) {
    FrameSample s = model.next_frame();
    result.frames.push_back(s);
    if (!is_keyframe(last_kf_pose, s.estimate, config.tracking.keyframe)) continue;
    if (config.tracking.max_keyframes > 0 && kf_count >= config.tracking.max_keyframes) break;
    const int k = kf_count++;
    try {
      Pose est = s.estimate;
      graph.add_node(k, est);
      if (k > 0) graph.add_edge({k - 1, k, last_kf_pose->inverse() * est, 1.0, EdgeKind::odometry});
      const std::optional<int> match = detect_loop(s.gt, history_gt, config.tracking.loop);
      history_gt.push_back(s.gt);
      bool relocalized = false;
      if (match) {
        const int j = *match;
        const Pose measurement = history_gt[static_cast<std::size_t>(j)].inverse() * s.gt;
        if (j > closed_upto) {
          LoopEvent ev;
          ev.keyframe_id = k;
          ev.match_id = j;
          ev.frame_index = s.index;
          std::vector<Pose> gt_so_far(history_gt.begin(), history_gt.end());
          const std::vector<Pose> before = graph_poses(graph);
          if (before.size() >= 3) ev.ate_before_cm = ate_rmse(before, gt_so_far);
          graph.add_edge({j, k, measurement, config.tracking.loop_weight, EdgeKind::loop});
          auto t0 = Clock::now();
          optimize_pose_graph(graph);
          ev.optimize_seconds = seconds_since(t0);
          const std::vector<Pose> after = graph_poses(graph);
          if (after.size() >= 3) ev.ate_after_cm = ate_rmse(after, gt_so_far);
          ev.submaps_at_closure = atlas.submaps().size();
          ev.nodes_at_closure = atlas.total_nodes();
          if (observer.on_loop) observer.on_loop(LoopStage::before_adjust, atlas, ev);

          std::vector<Pose> anchors_before;
          for (const Submap& sm : atlas.submaps()) anchors_before.push_back(sm.anchor_pose);
          t0 = Clock::now();
          ev.anchors_moved = adjust_submaps(atlas, graph.nodes());
          ev.adjust_seconds = seconds_since(t0);
          for (const Submap& sm : atlas.submaps()) {
            if (max_abs_diff(sm.anchor_pose, anchors_before[static_cast<std::size_t>(sm.id)]) > 0.0) {
              ev.affected_training_seconds += sm.training_seconds;
            }
          }
          if (observer.on_loop) observer.on_loop(LoopStage::after_adjust, atlas, ev);

          t0 = Clock::now();
          ev.submaps_finetuned = static_cast<int>(
              finetune_submaps(atlas, config.atlas.submap.finetune_budget, rng).size());
          ev.finetune_seconds = seconds_since(t0);
          if (observer.on_loop) observer.on_loop(LoopStage::after_finetune, atlas, ev);
          est = graph.pose(k);
          closed_upto = k;
          result.loops.push_back(ev);
        } else {
          // Revisit of an already corrected region: relocalize against the
          // matched keyframe instead of closing another loop.
          est = graph.pose(j) * measurement;
          graph.set_pose(k, est);
          graph.add_edge({j, k, measurement, config.tracking.loop_weight, EdgeKind::loop});
          relocalized = true;
        }
        model.correct_estimate(est);
        result.frames.back().estimate = est;
      }

      Keyframe kf;
      kf.id = k;
      kf.frame_index = s.index;
      kf.timestamp = s.timestamp;
      kf.intrinsics = config.camera;
      kf.pose = est;
      kf.gt_pose = s.gt;
      GroundTruthFrame frame = render_gt_frame(config.scene, s.gt, config.camera, 50.0, &noise_rng);
      kf.color = std::move(frame.color);
      kf.depth = std::move(frame.depth);
      KeyframeLog log;
      log.report = integrate_keyframe(atlas, std::move(kf), rng);
      log.frame_index = s.index;
      log.submaps = atlas.submaps().size();
      log.nodes = atlas.total_nodes();
      log.relocalized = relocalized;
      result.keyframes.push_back(log);
      if (observer.on_keyframe) observer.on_keyframe(atlas, log);
      last_kf_pose = est;
    } catch (const std::exception& e) {
      throw std::runtime_error("keyframe " + std::to_string(k) + " (frame " + std::to_string(s.index) +
                               "): " + e.what());
    }
  }

  if (config.eval.views > 0 && !result.keyframes.empty()) {
    std::vector<int> kf_frames;
    for (const auto& k : result.keyframes) kf_frames.push_back(k.frame_index);
    const int last = result.keyframes.back().frame_index;
    const std::vector<int> frames = sample_eval_frames(last, kf_frames, config.eval.views, config.eval.seed);
    std::vector<Pose> poses;
    for (int f : frames) poses.push_back(model.ground_truth()[static_cast<std::size_t>(f)]);
    result.eval = evaluate_views(atlas, config, poses, map_frame_poses(atlas, model.ground_truth(), frames), frames);
  }
  return result;
}

Json cmd_simulate(const RunConfig& config, const std::string& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  const std::string frames_dir = (fs::path(out_dir) / "frames").string();
  ensure_dir(frames_dir);
  TrajectoryModel model(config.trajectory);
  std::mt19937_64 noise_rng(config.seed + 29);
  std::vector<TrajectoryRecord> gt, est;
  while (!model.exhausted()) {
    const FrameSample s = model.next_frame();
    const GroundTruthFrame f = render_gt_frame(config.scene, s.gt, config.camera, 50.0, &noise_rng);
    write_ppm((fs::path(frames_dir) / frame_name("color", s.index, "ppm")).string(), f.color);
    write_pgm16((fs::path(frames_dir) / frame_name("depth", s.index, "pgm")).string(), f.depth, kDepthScale);
    gt.push_back({s.timestamp, s.gt});
    est.push_back({s.timestamp, s.estimate});
  }
  write_tum((fs::path(out_dir) / "trajectory_gt.txt").string(), gt);
  write_tum((fs::path(out_dir) / "trajectory_est.txt").string(), est);
  return {{"command", "simulate"}, {"frames", gt.size()}, {"out", out_dir}};
}

Json cmd_run(const RunConfig& config, const std::string& out_dir) {
  ensure_dir(out_dir);
  const fs::path out(out_dir);
  std::ofstream latency(out / "latency.jsonl");
  std::ofstream events(out / "events.jsonl");
  if (!latency || !events) throw std::runtime_error("cannot write logs in '" + out_dir + "'");
  // One complete line per record, flushed immediately.
  PipelineObserver observer;
  observer.on_keyframe = [&latency](const SubmapAtlas&, const KeyframeLog& k) {
    latency << keyframe_json(k).dump() << std::endl;
  };
  observer.on_loop = [&](LoopStage stage, const SubmapAtlas&, const LoopEvent& e) {
    if (stage != LoopStage::after_finetune) return;
    const std::string line = loop_json(e).dump();
    latency << line << std::endl;
    events << line << std::endl;
  };
  RunResult r = run_pipeline(config, observer);
  // Each frame is reported relative to its reference keyframe so that loop
  // corrections of the keyframe carry over to the frames that followed it.
  std::map<int, const Keyframe*> by_frame;
  for (const auto& [id, kf] : r.atlas->keyframes()) by_frame[kf.frame_index] = &kf;
  std::vector<TrajectoryRecord> gt, est;
  for (const auto& f : r.frames) {
    gt.push_back({f.timestamp, f.gt});
    auto it = by_frame.upper_bound(f.index);
    if (it == by_frame.begin()) {
      est.push_back({f.timestamp, f.estimate});
      continue;
    }
    const Keyframe& ref = *std::prev(it)->second;
    const Pose at_intake = r.frames[static_cast<std::size_t>(ref.frame_index)].estimate;
    est.push_back({f.timestamp, ref.pose * (at_intake.inverse() * f.estimate)});
  }
  write_tum((out / "trajectory_gt.txt").string(), gt);
  write_tum((out / "trajectory_est.txt").string(), est);
  save_checkpoint((out / "checkpoint").string(), config, *r.atlas);
  write_tum((out / "keyframes_gt.txt").string(), keyframe_records(*r.atlas, true));
  write_tum((out / "keyframes_est.txt").string(), keyframe_records(*r.atlas, false));
  Json metrics = {{"keyframes", r.keyframes.size()},
                  {"frames", r.frames.size()},
                  {"loop_events", r.loops.size()},
                  {"submaps", r.atlas->submaps().size()},
                  {"nodes", r.atlas->total_nodes()}};
  if (r.eval) metrics["eval"] = eval_to_json(*r.eval);
  std::ofstream mf(out / "metrics.json");
  mf << metrics.dump(2) << "\n";
  metrics["command"] = "run";
  return metrics;
}

Json cmd_render(const std::string& checkpoint, const std::string& poses_file, const std::string& out_dir) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const auto poses = read_tum(poses_file);
  ensure_dir(out_dir);
  int i = 0;
  for (const auto& rec : poses) {
    const FusedView v = render_fused(*ck.atlas, rec.pose, ck.config.camera);
    write_ppm((fs::path(out_dir) / frame_name("color", i, "ppm")).string(), v.color);
    write_pgm16((fs::path(out_dir) / frame_name("depth", i, "pgm")).string(), v.depth, kDepthScale);
    write_pgm16((fs::path(out_dir) / frame_name("uncertainty", i, "pgm")).string(), v.uncertainty, kUncertaintyScale);
    ++i;
  }
  return {{"command", "render"}, {"views", i}, {"out", out_dir}};
}

Json cmd_mesh(const std::string& checkpoint, int resolution, const std::string& out_dir) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const TriangleMesh mesh = mesh_atlas(*ck.atlas, resolution);
  ensure_dir(out_dir);
  const std::string path = (fs::path(out_dir) / "mesh.ply").string();
  write_ply(path, mesh);
  return {{"command", "mesh"}, {"vertices", mesh.vertices.size()}, {"triangles", mesh.triangles.size()},
          {"file", path}};
}

Json cmd_eval(const std::string& checkpoint, const RunConfig& config, const std::string& out_dir) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  if (ck.config_hash != scene_hash(config.scene)) {
    throw std::invalid_argument("config scene does not match checkpoint (hash " + hex64(scene_hash(config.scene)) +
                                " vs " + hex64(ck.config_hash) + ")");
  }
  const std::vector<Pose> traj = interpolate_trajectory(config.trajectory);
  std::vector<int> kf_frames;
  int last = 0;
  for (const auto& [id, kf] : ck.atlas->keyframes()) {
    kf_frames.push_back(kf.frame_index);
    last = std::max(last, kf.frame_index);
  }
  last = std::min(last, static_cast<int>(traj.size()) - 1);
  const std::vector<int> frames = sample_eval_frames(last, kf_frames, config.eval.views, config.eval.seed);
  std::vector<Pose> poses;
  for (int f : frames) poses.push_back(traj[static_cast<std::size_t>(f)]);
  const EvalReport report = evaluate_views(*ck.atlas, config, poses, map_frame_poses(*ck.atlas, traj, frames), frames);
  Json j = eval_to_json(report);
  ensure_dir(out_dir);
  std::ofstream out(fs::path(out_dir) / "eval.json");
  out << j.dump(2) << "\n";
  j["command"] = "eval";
  return j;
}

}  // namespace nimap
