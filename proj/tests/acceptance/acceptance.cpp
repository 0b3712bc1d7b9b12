// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Criterion numbers given on the
// command line restrict the run to those criteria.

#include "nimap/checkpoint.hpp"
#include "nimap/config.hpp"
#include "nimap/mesh.hpp"
#include "nimap/metrics.hpp"
#include "nimap/pipeline.hpp"
#include "nimap/renderer.hpp"
#include "nimap/scene_oracle.hpp"
#include "nimap/submaps.hpp"
#include "nimap/tracking_sim.hpp"
#include "oracles.hpp"
#include "toy_field.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace nimap;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

// Mean depth L1 in cm of the fused map against the scene oracle, both
// rendered at the same world poses.
double map_depth_l1_cm(const SubmapAtlas& atlas, const RunConfig& config, const std::vector<Pose>& poses) {
  std::vector<double> errors;
  for (const Pose& pose : poses) {
    const GroundTruthFrame gt = render_gt_frame(config.scene, pose, config.camera);
    const FusedView view = render_fused(atlas, pose, config.camera);
    errors.push_back(depth_l1(view.depth, gt.depth, valid_depth_mask(gt.depth)));
  }
  return mean(errors);
}

bool same_view(const FusedView& a, const FusedView& b) {
  return a.color.data == b.color.data && a.depth.data == b.depth.data && a.uncertainty.data == b.uncertainty.data &&
         a.winner.data == b.winner.data;
}

std::vector<std::uint64_t> field_checksums(const SubmapAtlas& atlas) {
  std::vector<std::uint64_t> out;
  for (const Submap& s : atlas.submaps()) out.push_back(s.field.checksum());
  return out;
}

// Every eighth keyframe pose of a finished map, used as test views.
std::vector<Pose> keyframe_views(const SubmapAtlas& atlas) {
  std::vector<Pose> out;
  for (const auto& [id, kf] : atlas.keyframes()) {
    if (id % 8 == 3) out.push_back(kf.pose);
  }
  return out;
}

Outcome criterion_gradients() {
  const auto start = Clock::now();
  int checked = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; checked < 120 && seed < 1000; ++seed) {
    toy::Problem p = toy::make_problem(seed);
    if (p.rays.empty()) continue;
    const toy::GradientCheck g = toy::check_gradients(p);
    worst = std::max({worst, g.decoder_error, g.feature_error});
    ++checked;
  }
  const double secs = seconds_since(start);
  return {checked >= 100 && worst < 1e-4 && secs < 30.0,
          fmt("%d toy fields, worst relative error %.2e, %.1f s", checked, worst, secs)};
}

Outcome criterion_compositing() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(0, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  double max_sum = 0.0;
  bool negative = false;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = count(rng);
    std::vector<double> depths, occ;
    std::vector<Vec3> colors;
    double t = 0.1;
    for (int i = 0; i < n; ++i) {
      t += 0.05 * u(rng);
      depths.push_back(t);
      const double r = u(rng);
      occ.push_back(r < 0.05 ? 0.0 : (r < 0.1 ? 1.0 : u(rng)));
      colors.emplace_back(u(rng), u(rng), u(rng));
    }
    const CompositeResult got = composite(depths, occ, colors);
    const oracle::Composite want = oracle::composite(depths, occ, colors);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double w = got.weights[static_cast<std::size_t>(i)];
      worst = std::max(worst, std::abs(w - want.weights[static_cast<std::size_t>(i)]));
      negative = negative || w < 0.0;
      sum += w;
    }
    worst = std::max({worst, std::abs(got.depth - want.depth), (got.color - want.color).cwiseAbs().maxCoeff(),
                      std::abs(got.opacity - want.opacity)});
    max_sum = std::max(max_sum, sum);
  }
  // Summing up to sixteen weights in floating point can overshoot 1 by a few ulps.
  return {worst <= 1e-12 && !negative && max_sum <= 1.0 + 1e-12,
          fmt("10000 rays, max deviation %.1e, max weight sum %.17g, negative weights: %s", worst, max_sum,
              negative ? "yes" : "no")};
}

// Observations gathered from the full room run for criteria 3 and 6.
struct RoomRun {
  bool ran = false;
  double seconds = 0.0;
  EvalReport eval;
  std::vector<KeyframeLog> keyframes;
  std::vector<LoopEvent> loops;
  // Map size once the first closure, including fine-tuning, has finished.
  std::size_t submaps_after_closure = 0;
  std::size_t nodes_after_closure = 0;
  int lap_frames = 0;
};

RoomRun& room_run() {
  static RoomRun run;
  if (run.ran) return run;
  const RunConfig config = load_config(NIMAP_SOURCE_DIR "/configs/room.json");
  PipelineObserver obs;
  obs.on_loop = [&](LoopStage stage, const SubmapAtlas& atlas, const LoopEvent&) {
    if (stage != LoopStage::after_finetune || run.nodes_after_closure > 0) return;
    run.submaps_after_closure = atlas.submaps().size();
    run.nodes_after_closure = atlas.total_nodes();
  };
  const auto start = Clock::now();
  RunResult result = run_pipeline(config, obs);
  run.seconds = seconds_since(start);
  run.eval = *result.eval;
  run.keyframes = result.keyframes;
  run.loops = result.loops;
  const int frames = static_cast<int>(interpolate_trajectory(config.trajectory).size());
  run.lap_frames = (frames - 1) / config.trajectory.laps;
  run.ran = true;
  return run;
}

Outcome criterion_room_quality() {
  const RoomRun& run = room_run();
  const double l1 = run.eval.depth_l1_cm, psnr = run.eval.psnr_db;
  return {l1 < 7.5 && psnr > 25.0 && run.seconds < 1800.0,
          fmt("%zu keyframes, depth L1 %.2f cm, PSNR %.2f dB, SSIM %.3f, %.0f s", run.keyframes.size(), l1, psnr,
              run.eval.ssim, run.seconds)};
}

Outcome criterion_loop_correction() {
  RunConfig base = load_config(NIMAP_SOURCE_DIR "/configs/room.json");
  base.trajectory.laps = 1;
  base.tracking.max_keyframes = 0;
  base.eval.views = 0;
  base.trajectory.drift.sigma_t = 0.0;
  base.trajectory.drift.sigma_r = 0.0;
  base.trajectory.drift.bias.setZero();

  struct StageLog {
    std::vector<Pose> views;
    std::map<LoopStage, double> l1;
    LoopEvent event;
    bool closed = false;
  };
  auto run = [](const RunConfig& config) {
    StageLog log;
    PipelineObserver obs;
    obs.on_loop = [&](LoopStage stage, const SubmapAtlas& atlas, const LoopEvent& event) {
      if (log.closed && stage == LoopStage::before_adjust) return;  // only the first closure
      if (stage == LoopStage::before_adjust) {
        for (const auto& [id, kf] : atlas.keyframes()) {
          if (id % 4 == 0) log.views.push_back(kf.gt_pose);
        }
      }
      if (log.l1.count(stage) == 0 && !log.views.empty()) log.l1[stage] = map_depth_l1_cm(atlas, config, log.views);
      if (stage == LoopStage::after_finetune) {
        log.event = event;
        log.closed = true;
      }
    };
    run_pipeline(config, obs);
    return log;
  };

  const StageLog clean = run(base);
  RunConfig drifted = base;
  drifted.trajectory.drift.bias << 0.0, 0.0, 0.0, 0.0, 0.02 * M_PI / 180.0, 0.0;
  const StageLog drift = run(drifted);
  if (!clean.closed || !drift.closed) return {false, "no loop closure detected"};

  const double baseline = clean.l1.at(LoopStage::before_adjust);
  const double before = drift.l1.at(LoopStage::before_adjust);
  const double adjusted = drift.l1.at(LoopStage::after_adjust);
  const double tuned = drift.l1.at(LoopStage::after_finetune);
  const double reduction = 1.0 - adjusted / before;
  const double ratio = drift.event.adjust_seconds / drift.event.affected_training_seconds;
  const bool pass = before > 5.0 * baseline && reduction >= 0.7 && tuned <= adjusted && ratio < 0.01;
  return {pass, fmt("baseline %.2f cm, drifted %.2f cm, after adjust %.2f cm (-%.0f%%), after fine-tune %.2f cm, "
                    "adjust %.4f s vs %.1f s of affected training",
                    baseline, before, adjusted, 100.0 * reduction, tuned, drift.event.adjust_seconds,
                    drift.event.affected_training_seconds)};
}

TrajectoryConfig square_loop() {
  TrajectoryConfig c;
  c.waypoints = {{Vec3(0, 0, 1), 0.0, 0.0},
                 {Vec3(2, 0, 1), M_PI / 2, 0.0},
                 {Vec3(2, 2, 1), M_PI, 0.0},
                 {Vec3(0, 2, 1), -M_PI / 2, 0.0}};
  return c;
}

// Keyframe graph over every fifth frame with odometry edges taken from the
// estimates and one ground-truth loop edge from the last node to the first.
PoseGraph square_graph(const std::vector<FrameSample>& samples, std::vector<int>& ids) {
  PoseGraph g;
  ids.clear();
  for (std::size_t i = 0; i < samples.size(); i += 5) {
    const int id = static_cast<int>(i);
    g.add_node(id, samples[i].estimate);
    if (!ids.empty()) {
      const auto prev = static_cast<std::size_t>(ids.back());
      g.add_edge({ids.back(), id, samples[prev].estimate.inverse() * samples[i].estimate, 1.0, EdgeKind::odometry});
    }
    ids.push_back(id);
  }
  const auto last = static_cast<std::size_t>(ids.back());
  g.add_edge({0, ids.back(), samples[0].gt.inverse() * samples[last].gt, 10.0, EdgeKind::loop});
  return g;
}

Outcome criterion_pose_graph() {
  // Exact graph: consistent measurements from ground truth, perturbed start.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  double exact_error = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Pose> truth{Pose::identity()};
    for (int i = 1; i < 20; ++i) {
      truth.push_back(truth.back() * Pose(oracle::rodrigues(Vec3(0.2 * n(rng), 0.2 * n(rng), 0.2 * n(rng))),
                                          Vec3(0.5 * n(rng), 0.5 * n(rng), 0.5 * n(rng))));
    }
    PoseGraph g;
    for (int i = 0; i < 20; ++i) {
      const Pose noise(oracle::rodrigues(Vec3(0.05 * n(rng), 0.05 * n(rng), 0.05 * n(rng))),
                       Vec3(0.1 * n(rng), 0.1 * n(rng), 0.1 * n(rng)));
      g.add_node(i, i == 0 ? truth[0] : truth[static_cast<std::size_t>(i)] * noise);
    }
    for (int i = 0; i + 1 < 20; ++i) {
      const auto a = static_cast<std::size_t>(i);
      g.add_edge({i, i + 1, truth[a].inverse() * truth[a + 1], 1.0, EdgeKind::odometry});
    }
    g.add_edge({0, 19, truth[0].inverse() * truth[19], 10.0, EdgeKind::loop});
    optimize_pose_graph(g);
    for (int i = 0; i < 20; ++i) {
      const Pose& p = g.pose(i);
      const Pose& q = truth[static_cast<std::size_t>(i)];
      exact_error = std::max({exact_error, (p.rotation() - q.rotation()).cwiseAbs().maxCoeff(),
                              (p.translation() - q.translation()).cwiseAbs().maxCoeff()});
    }
  }

  // Default drift noise plus a known bias on a square loop.
  TrajectoryConfig square = square_loop();
  square.drift.bias << 0.0, 0.0, 0.0, 0.0, 0.003, 0.0;  // heading drift about the camera vertical axis
  TrajectoryModel model(square);
  std::vector<FrameSample> samples;
  while (!model.exhausted()) samples.push_back(model.next_frame());
  std::vector<int> ids;
  PoseGraph g = square_graph(samples, ids);
  std::vector<Pose> gt, before, after;
  for (int id : ids) {
    gt.push_back(samples[static_cast<std::size_t>(id)].gt);
    before.push_back(g.pose(id));
  }
  optimize_pose_graph(g);
  for (int id : ids) after.push_back(g.pose(id));
  const double ate_before = ate_rmse(before, gt), ate_after = ate_rmse(after, gt);
  const double reduction = 1.0 - ate_after / ate_before;
  return {exact_error < 1e-8 && reduction >= 0.9,
          fmt("exact graph max error %.1e; square loop ATE %.2f -> %.2f cm (-%.0f%%)", exact_error, ate_before,
              ate_after, 100.0 * reduction)};
}

Outcome criterion_bounded_growth() {
  const RoomRun& run = room_run();
  if (run.loops.empty() || run.nodes_after_closure == 0) return {false, "no loop closure detected"};
  // Fine-tuning at the closure re-grows moved submaps from their corrected
  // members; growth is measured from the map as the closure leaves it.
  const LoopEvent& first = run.loops.front();
  std::size_t max_submaps = run.submaps_after_closure, max_nodes = run.nodes_after_closure;
  int counted = 0;
  for (const KeyframeLog& k : run.keyframes) {
    if (k.frame_index <= first.frame_index || k.frame_index > 2 * run.lap_frames) continue;
    max_submaps = std::max(max_submaps, k.submaps);
    max_nodes = std::max(max_nodes, k.nodes);
    ++counted;
  }
  auto growth = [](std::size_t now, std::size_t then) {
    return (static_cast<double>(now) - static_cast<double>(then)) / static_cast<double>(then);
  };
  const double submap_growth = growth(max_submaps, run.submaps_after_closure);
  const double node_growth = growth(max_nodes, run.nodes_after_closure);
  return {counted > 0 && submap_growth < 0.05 && node_growth < 0.05,
          fmt("first closure at frame %d leaves %zu submaps and %zu nodes (%zu before correction); second traversal "
              "(%d keyframes): submaps +%.1f%%, nodes +%.1f%% (+%.1f%% against the pre-correction count)",
              first.frame_index, run.submaps_after_closure, run.nodes_after_closure, first.nodes_at_closure, counted,
              100.0 * submap_growth, 100.0 * node_growth, 100.0 * growth(max_nodes, first.nodes_at_closure))};
}

// Room map built from the first part of one lap, shared by criteria 7, 9 and 10.
struct PartialMap {
  RunConfig config;
  RunResult result;
};

PartialMap& partial_map() {
  static std::optional<PartialMap> map;
  if (map) return *map;
  RunConfig config = load_config(NIMAP_SOURCE_DIR "/configs/room.json");
  config.trajectory.laps = 1;
  config.tracking.max_keyframes = 30;
  config.eval.views = 0;
  map.emplace(PartialMap{config, run_pipeline(config)});
  return *map;
}

Outcome criterion_uncertainty() {
  PartialMap& pm = partial_map();
  const SubmapAtlas& atlas = *pm.result.atlas;
  const std::vector<Pose> gt = interpolate_trajectory(pm.config.trajectory);
  std::vector<int> kf_frames;
  for (const KeyframeLog& k : pm.result.keyframes) kf_frames.push_back(k.frame_index);
  const std::vector<int> frames = sample_eval_frames(static_cast<int>(gt.size()) - 1, kf_frames, 24, 77);
  const std::vector<Pose> map_poses = map_frame_poses(atlas, gt, frames);
  std::vector<Pose> gt_poses;
  for (int f : frames) gt_poses.push_back(gt[static_cast<std::size_t>(f)]);
  const EvalReport report = evaluate_views(atlas, pm.config, gt_poses, map_poses, frames);
  std::vector<ViewRecord> records;
  for (const EvalView& v : report.views) records.push_back(v.record);
  const UncertaintyCorrelation rho = uncertainty_correlation(records);

  double lo = 1.0, hi = 0.0;
  for (const Pose& pose : map_poses) {
    const FusedView view = render_fused(atlas, pose, pm.config.camera);
    for (double s : view.uncertainty.data) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  // Outside the room looking away from it: nothing mapped in view.
  const FusedView away = render_fused(atlas, look_at(Vec3(20, 0, 1.5), Vec3(30, 0, 1.5)), pm.config.camera);
  bool away_exact = true;
  for (double s : away.uncertainty.data) away_exact = away_exact && s == kUnobservedVariance;

  const bool pass = records.size() >= 20 && rho.rho_depth > 0.5 && rho.rho_psnr < -0.5 && lo >= 0.0 && hi <= 0.25 &&
                    away_exact;
  return {pass, fmt("%zu views, rho(var, L1) %.3f, rho(var, PSNR) %.3f, variance range [%.4f, %.4f], "
                    "away view all 0.25: %s",
                    records.size(), rho.rho_depth, rho.rho_psnr, lo, hi, away_exact ? "yes" : "no")};
}

Outcome criterion_octree() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  std::size_t ray_mismatch = 0, rays = 0, hits = 0;
  double weight_error = 0.0;
  bool weights_negative = false, bound_ok = true;
  for (int g = 0; g < 10; ++g) {
    GridConfig cfg;
    cfg.extent = 2.0;
    cfg.max_depth = 4 + g % 3;
    cfg.active_levels = 2 + g % 2;
    cfg.feature_dim = 2;
    cfg.seed = static_cast<std::uint64_t>(g + 1);
    OctreeFeatureGrid grid(cfg);
    std::vector<Vec3> pts;
    const int k = 50 + 40 * g;
    for (int i = 0; i < k; ++i) pts.emplace_back(0.95 * u(rng), 0.95 * u(rng), 0.95 * u(rng));
    grid.insert_points(pts);
    bound_ok = bound_ok && grid.node_count() <= static_cast<std::size_t>(k) * static_cast<std::size_t>(cfg.max_depth + 1);

    for (int i = 0; i < 1000; ++i, ++rays) {
      Ray r;
      r.origin = Vec3(1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng));
      r.direction = Vec3(n(rng), n(rng), n(rng)).normalized();
      const auto got = grid.ray_voxel_intersections(r, 0.0, 5.0);
      const auto want = oracle::ray_leaves(grid, r, 0.0, 5.0);
      bool same = got.size() == want.size();
      for (std::size_t j = 0; same && j < got.size(); ++j) {
        same = got[j].node == want[j].node && std::abs(got[j].t_entry - want[j].t_entry) < 1e-9 &&
               std::abs(got[j].t_exit - want[j].t_exit) < 1e-9;
      }
      hits += got.size();
      if (!same) ++ray_mismatch;
    }
    std::vector<double> z(2);
    for (int i = 0; i < 500; ++i) {
      const Vec3 p = pts[static_cast<std::size_t>(i) % pts.size()] + Vec3(0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng));
      if (grid.find_leaf(p) < 0) continue;
      InterpolationRecord rec;
      grid.interpolate(p, z, rec);
      for (int l = 0; l < rec.level_count; ++l) {
        double sum = 0.0;
        for (double w : rec.levels[static_cast<std::size_t>(l)].weights) {
          sum += w;
          weights_negative = weights_negative || w < 0.0;
        }
        weight_error = std::max(weight_error, std::abs(sum - 1.0));
      }
    }
  }
  std::uniform_int_distribution<std::uint32_t> coord(0, (1u << 21) - 1);
  std::size_t morton_bad = 0;
  for (int i = 0; i < 100000; ++i) {
    const std::uint32_t x = coord(rng), y = coord(rng), z = coord(rng);
    const std::uint64_t code = morton_encode(x, y, z);
    const auto back = morton_decode(code);
    if (code != oracle::morton(x, y, z) || back[0] != x || back[1] != y || back[2] != z) ++morton_bad;
  }
  const bool pass = ray_mismatch == 0 && morton_bad == 0 && weight_error < 1e-12 && !weights_negative && bound_ok;
  return {pass, fmt("%zu rays (%zu leaf hits), %zu mismatches; 100000 Morton round trips, %zu failures; "
                    "weight sum error %.1e; node bound %s",
                    rays, hits, ray_mismatch, morton_bad, weight_error, bound_ok ? "held" : "violated")};
}

Outcome criterion_rigid_invariance() {
  PartialMap& pm = partial_map();
  const SubmapAtlas& atlas = *pm.result.atlas;
  const std::vector<Pose> views = keyframe_views(atlas);
  std::vector<FusedView> reference;
  for (const Pose& v : views) reference.push_back(render_fused(atlas, v, pm.config.camera));
  const auto sums = field_checksums(atlas);

  const std::vector<Pose> motions{
      Pose(oracle::rodrigues(Vec3(0.0, 0.0, 1.3)), Vec3(4.0, -2.0, 0.5)),
      Pose(oracle::rodrigues(Vec3(0.4, -0.7, 0.2)), Vec3(-10.0, 3.0, 7.0)),
  };
  int compared = 0, differing = 0;
  bool checksums_same = true;
  for (const Pose& G : motions) {
    SubmapAtlas moved = atlas;
    std::map<int, Pose> updated;
    for (const auto& [id, kf] : moved.keyframes()) updated.emplace(id, G * kf.pose);
    adjust_submaps(moved, updated);
    checksums_same = checksums_same && field_checksums(moved) == sums;
    for (std::size_t i = 0; i < views.size(); ++i, ++compared) {
      if (!same_view(render_fused(moved, G * views[i], pm.config.camera), reference[i])) ++differing;
    }
  }
  return {differing == 0 && checksums_same && compared > 0,
          fmt("%d renders under %zu global motions, %d differ; field checksums %s", compared, motions.size(),
              differing, checksums_same ? "unchanged" : "changed")};
}

Outcome criterion_checkpoint_and_mesh() {
  PartialMap& pm = partial_map();
  const SubmapAtlas& atlas = *pm.result.atlas;
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "nimap_acceptance_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir.string(), pm.config, atlas);
  const LoadedCheckpoint loaded = load_checkpoint(dir.string());
  std::filesystem::remove_all(dir);
  bool identical = field_checksums(*loaded.atlas) == field_checksums(atlas);
  int views = 0;
  for (const Pose& v : keyframe_views(atlas)) {
    identical = identical && same_view(render_fused(*loaded.atlas, v, pm.config.camera),
                                       render_fused(atlas, v, pm.config.camera));
    ++views;
  }

  const RunConfig sphere = load_config(NIMAP_SOURCE_DIR "/configs/sphere.json");
  RunConfig sphere_run = sphere;
  sphere_run.eval.views = 0;
  const RunResult trained = run_pipeline(sphere_run);
  const double leaf = trained.atlas->submaps().front().field.grid.leaf_size();
  const TriangleMesh mesh = mesh_atlas(*trained.atlas, 96);
  std::size_t near = 0;
  for (const Vec3& v : mesh.vertices) {
    if (std::abs(v.norm() - 1.0) <= 2.0 * leaf) ++near;
  }
  const double fraction =
      mesh.vertices.empty() ? 0.0 : static_cast<double>(near) / static_cast<double>(mesh.vertices.size());
  return {identical && views > 0 && fraction >= 0.95,
          fmt("checkpoint round trip over %d views %s; sphere mesh %zu vertices, %.1f%% within %.2f m of the surface",
              views, identical ? "bitwise identical" : "differs", mesh.vertices.size(), 100.0 * fraction,
              2.0 * leaf)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion_gradients},       {2, criterion_compositing},      {3, criterion_room_quality},
      {4, criterion_loop_correction}, {5, criterion_pose_graph},       {6, criterion_bounded_growth},
      {7, criterion_uncertainty},     {8, criterion_octree},           {9, criterion_rigid_invariance},
      {10, criterion_checkpoint_and_mesh},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!selected.empty() && selected.count(id) == 0) continue;
    Outcome outcome;
    const auto start = Clock::now();
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failures;
    std::printf("criterion %d: %s (%s) [%.1f s]\n", id, outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str(),
                seconds_since(start));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
