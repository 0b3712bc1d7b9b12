#include "nimap/submaps.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace nimap {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

FieldConfig submap_field_config(const FieldConfig& base, int id) {
  FieldConfig cfg = base;
  cfg.seed = base.seed + 7919ULL * static_cast<std::uint64_t>(id);
  cfg.grid.seed = base.grid.seed + 104729ULL * static_cast<std::uint64_t>(id);
  return cfg;
}

bool inside_other_submap(const SubmapAtlas& atlas, int self, const Vec3& world_point) {
  for (const Submap& other : atlas.submaps()) {
    if (other.id == self) continue;
    const Vec3 local = other.anchor_pose.inverse().apply(world_point);
    if (other.field.grid.contains(local) && other.field.grid.find_leaf(local) >= 0) return true;
  }
  return false;
}

/// Appends the eight corners of an axis-aligned cube of half-width `half`
/// around p, or p itself when half is zero.
void append_dilated(const Vec3& p, double half, std::vector<Vec3>& out) {
  if (half <= 0.0) {
    out.push_back(p);
    return;
  }
  for (int k = 0; k < 8; ++k) {
    out.emplace_back(p.x() + ((k & 1) ? half : -half), p.y() + ((k & 2) ? half : -half),
                     p.z() + ((k & 4) ? half : -half));
  }
}

bool moved_beyond(const Pose& a, const Pose& b, double translation, double rotation) {
  const Pose rel = a.inverse() * b;
  return rel.translation().norm() > translation || rotation_angle(rel.rotation()) > rotation;
}

LossReport train_views(SubmapAtlas& atlas, Submap& submap, const std::vector<int>& view_ids, int iterations,
                       std::mt19937_64& rng, int& done) {
  std::vector<TrainingView> views;
  for (int id : view_ids) {
    const Keyframe& kf = atlas.keyframe(id);
    views.push_back({&kf, submap.camera_in_anchor(kf.pose)});
  }
  LossReport last;
  done = 0;
  for (int it = 0; it < iterations; ++it) {
    last = train_step(submap.field, views, atlas.config().train, rng);
    ++done;
  }
  for (int id : view_ids) submap.trained_relative[id] = submap.anchor_pose.inverse() * atlas.keyframe(id).pose;
  return last;
}

}  // namespace

Submap::Submap(int id_, int anchor_id, const Pose& anchor, const FieldConfig& config)
    : id(id_), anchor_kf_id(anchor_id), anchor_pose(anchor), field(submap_field_config(config, id_)) {}

Submap::Submap(int id_, int anchor_id, const Pose& anchor, NeuralField f)
    : id(id_), anchor_kf_id(anchor_id), anchor_pose(anchor), field(std::move(f)) {}

Pose Submap::camera_in_anchor(const Pose& camera_world) const {
  return snap_to_lattice(anchor_pose.inverse() * camera_world);
}

SubmapAtlas::SubmapAtlas(const AtlasConfig& config) : config_(config) {
  config_.field.grid.validate();
  if (config_.submap.window < 1 || config_.submap.iters_per_keyframe < 0 || config_.submap.growth_stride < 1 ||
      config_.submap.covis_stride < 1) {
    throw std::invalid_argument("invalid submap parameters");
  }
}

Submap& SubmapAtlas::submap(int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= submaps_.size()) throw std::out_of_range("unknown submap id");
  return submaps_[static_cast<std::size_t>(id)];
}

const Submap& SubmapAtlas::submap(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= submaps_.size()) throw std::out_of_range("unknown submap id");
  return submaps_[static_cast<std::size_t>(id)];
}

const Keyframe& SubmapAtlas::keyframe(int id) const {
  auto it = keyframes_.find(id);
  if (it == keyframes_.end()) throw std::out_of_range("unknown keyframe id " + std::to_string(id));
  return it->second;
}

int SubmapAtlas::owner(int kf_id) const {
  auto it = assignment_.find(kf_id);
  if (it == assignment_.end()) throw std::out_of_range("keyframe not assigned to a submap");
  return it->second;
}

std::size_t SubmapAtlas::total_nodes() const {
  std::size_t n = 0;
  for (const auto& s : submaps_) n += s.field.grid.node_count();
  return n;
}

Submap& SubmapAtlas::create_submap(const Keyframe& anchor) {
  const int id = static_cast<int>(submaps_.size());
  submaps_.emplace_back(id, anchor.id, anchor.pose, config_.field);
  Submap& s = submaps_.back();
  const double half = config_.submap.growth_dilation * s.field.grid.leaf_size();
  std::vector<Vec3> local;
  for (const Vec3& p : anchor.back_projected_points(Pose::identity(), config_.submap.growth_stride)) {
    append_dilated(p, half, local);
  }
  for (const Vec3& p : local) {
    if (s.field.grid.contains(p)) s.anchor_leaves.insert(s.field.grid.leaf_key(p));
  }
  active_ = id;
  return s;
}

void SubmapAtlas::assign(int kf_id, int submap_id) {
  Submap& target = submap(submap_id);
  auto it = assignment_.find(kf_id);
  if (it != assignment_.end()) {
    auto& old = submap(it->second).members;
    old.erase(std::remove(old.begin(), old.end(), kf_id), old.end());
  }
  assignment_[kf_id] = submap_id;
  target.members.push_back(kf_id);
}

void SubmapAtlas::add_keyframe(Keyframe kf) {
  const int id = kf.id;
  if (!keyframes_.emplace(id, std::move(kf)).second) throw std::invalid_argument("duplicate keyframe id");
}

double submap_coverage(const Submap& submap, const std::vector<Vec3>& world_points) {
  if (world_points.empty()) return 0.0;
  const Pose to_local = submap.anchor_pose.inverse();
  std::size_t hit = 0;
  for (const Vec3& p : world_points) {
    const Vec3 local = to_local.apply(p);
    if (submap.field.grid.contains(local) && submap.field.grid.find_leaf(local) >= 0) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(world_points.size());
}

double union_coverage(const SubmapAtlas& atlas, const std::vector<Vec3>& world_points) {
  if (world_points.empty()) return 0.0;
  std::size_t hit = 0;
  for (const Vec3& p : world_points) {
    if (inside_other_submap(atlas, -1, p)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(world_points.size());
}

double anchor_covisibility(const Submap& submap, const std::vector<Vec3>& world_points) {
  if (world_points.empty()) return 0.0;
  const Pose to_local = submap.anchor_pose.inverse();
  std::size_t hit = 0;
  for (const Vec3& p : world_points) {
    const Vec3 local = to_local.apply(p);
    if (submap.field.grid.contains(local) && submap.anchor_leaves.count(submap.field.grid.leaf_key(local))) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(world_points.size());
}

Selection select_local_map(SubmapAtlas& atlas, const Keyframe& kf) {
  Selection sel;
  const SubmapParams& params = atlas.config().submap;
  if (atlas.submaps().empty()) {
    sel.submap_id = atlas.create_submap(kf).id;
    sel.created = true;
    sel.reason = SelectionReason::created_first;
    return sel;
  }
  const std::vector<Vec3> points = kf.back_projected_points(kf.pose, params.covis_stride);
  int best = -1;
  double best_cov = -1.0;
  for (const Submap& s : atlas.submaps()) {
    const double c = submap_coverage(s, points);
    sel.coverage.push_back(c);
    if (c > best_cov) {
      best_cov = c;
      best = s.id;
    }
  }
  if (best_cov >= params.covis_threshold) {
    sel.submap_id = best;
    sel.reason = SelectionReason::reused_best;
  } else if (union_coverage(atlas, points) >= params.covis_threshold) {
    sel.submap_id = best;
    sel.reason = SelectionReason::reused_union;
  } else if (atlas.active_submap() >= 0 &&
             anchor_covisibility(atlas.submap(atlas.active_submap()), points) >= params.anchor_covis_threshold) {
    sel.submap_id = atlas.active_submap();
    sel.reason = SelectionReason::extended_active;
  } else {
    sel.submap_id = atlas.create_submap(kf).id;
    sel.created = true;
    sel.reason = SelectionReason::created_new;
  }
  atlas.set_active_submap(sel.submap_id);
  return sel;
}

InsertResult grow_submap(SubmapAtlas& atlas, Submap& submap, const Keyframe& kf) {
  const std::vector<Vec3> world = kf.back_projected_points(kf.pose, atlas.config().submap.growth_stride);
  const Pose to_local = submap.anchor_pose.inverse();
  const double half = atlas.config().submap.growth_dilation * submap.field.grid.leaf_size();
  std::vector<Vec3> local;
  local.reserve(world.size() * (half > 0.0 ? 8 : 1));
  for (const Vec3& p : world) {
    if (atlas.submaps().size() > 1 && inside_other_submap(atlas, submap.id, p)) continue;
    append_dilated(to_local.apply(p), half, local);
  }
  return submap.field.grid.insert_points(local);
}

IntegrationReport integrate_keyframe(SubmapAtlas& atlas, Keyframe kf, std::mt19937_64& rng) {
  const auto start = Clock::now();
  const int kf_id = kf.id;
  atlas.add_keyframe(std::move(kf));
  const Keyframe& stored = atlas.keyframe(kf_id);

  IntegrationReport report;
  report.keyframe_id = kf_id;
  Selection sel = select_local_map(atlas, stored);
  atlas.record_covisibility(kf_id, sel.coverage);
  report.submap_id = sel.submap_id;
  report.created = sel.created;
  report.reason = sel.reason;
  Submap& submap = atlas.submap(sel.submap_id);
  atlas.assign(kf_id, submap.id);
  report.new_nodes = grow_submap(atlas, submap, stored).new_nodes;

  const SubmapParams& params = atlas.config().submap;
  std::vector<int> view_ids{kf_id};
  std::vector<int> others(submap.members.begin(), submap.members.end());
  others.erase(std::remove(others.begin(), others.end(), kf_id), others.end());
  const int want = params.window - 1;
  const int recent = std::min<int>(want / 2 + want % 2, static_cast<int>(others.size()));
  for (int i = 0; i < recent; ++i) view_ids.push_back(others[others.size() - 1 - static_cast<std::size_t>(i)]);
  others.resize(others.size() - static_cast<std::size_t>(recent));
  std::shuffle(others.begin(), others.end(), rng);
  for (int i = 0; i < want - recent && i < static_cast<int>(others.size()); ++i) {
    view_ids.push_back(others[static_cast<std::size_t>(i)]);
  }

  const auto train_start = Clock::now();
  int done = 0;
  const int iterations = sel.created ? std::max(params.iters_per_keyframe, params.iters_new_submap) : params.iters_per_keyframe;
  if (iterations > 0) {
    report.loss = train_views(atlas, submap, view_ids, iterations, rng, done);
  } else {
    submap.trained_relative[kf_id] = submap.anchor_pose.inverse() * stored.pose;
  }
  submap.training_seconds += seconds_since(train_start);
  report.seconds = seconds_since(start);
  return report;
}

int adjust_submaps(SubmapAtlas& atlas, const std::map<int, Pose>& updated_poses) {
  for (const Submap& s : atlas.submaps()) {
    if (!updated_poses.count(s.anchor_kf_id)) {
      throw std::out_of_range("adjust_submaps: no updated pose for anchor keyframe " + std::to_string(s.anchor_kf_id));
    }
  }
  for (const auto& [id, pose] : updated_poses) {
    auto it = atlas.keyframes().find(id);
    if (it != atlas.keyframes().end()) it->second.pose = pose;
  }
  int moved = 0;
  for (Submap& s : atlas.submaps()) {
    const Pose& next = updated_poses.at(s.anchor_kf_id);
    if (max_abs_diff(next, s.anchor_pose) > 0.0) ++moved;
    s.anchor_pose = next;
  }
  return moved;
}

bool needs_finetune(const SubmapAtlas& atlas, const Submap& submap) {
  const SubmapParams& params = atlas.config().submap;
  for (const auto& [id, trained] : submap.trained_relative) {
    const Pose now = submap.anchor_pose.inverse() * atlas.keyframe(id).pose;
    if (moved_beyond(trained, now, params.ft_translation, params.ft_rotation)) return true;
  }
  return false;
}

std::vector<FinetuneReport> finetune_submaps(SubmapAtlas& atlas, int budget, std::mt19937_64& rng) {
  std::vector<FinetuneReport> reports;
  if (budget <= 0) return reports;
  for (Submap& submap : atlas.submaps()) {
    if (!needs_finetune(atlas, submap)) continue;
    const auto start = Clock::now();
    for (int id : submap.members) grow_submap(atlas, submap, atlas.keyframe(id));
    FinetuneReport rep;
    rep.submap_id = submap.id;
    rep.loss = train_views(atlas, submap, submap.members, budget, rng, rep.iterations);
    rep.seconds = seconds_since(start);
    submap.training_seconds += rep.seconds;
    reports.push_back(rep);
  }
  return reports;
}

bool box_in_frustum(const Aabb& box, const Pose& camera_in_box_frame, const Intrinsics& intr, double t_max) {
  if (box.empty) return false;
  const Pose to_camera = camera_in_box_frame.inverse();
  std::array<Vec3, 8> c;
  for (int k = 0; k < 8; ++k) {
    const Vec3 corner((k & 1) ? box.max.x() : box.min.x(), (k & 2) ? box.max.y() : box.min.y(),
                      (k & 4) ? box.max.z() : box.min.z());
    c[static_cast<std::size_t>(k)] = to_camera.apply(corner);
  }
  // Half-space tests through the camera centre plus the near and far planes.
  const double left = intr.cx + 0.5;
  const double right = intr.width - 0.5 - intr.cx;
  const double top = intr.cy + 0.5;
  const double bottom = intr.height - 0.5 - intr.cy;
  auto all_outside = [&](auto&& outside) {
    return std::all_of(c.begin(), c.end(), [&](const Vec3& p) { return outside(p); });
  };
  if (all_outside([](const Vec3& p) { return p.z() <= 0.0; })) return false;
  if (all_outside([&](const Vec3& p) { return p.z() > t_max; })) return false;
  if (all_outside([&](const Vec3& p) { return intr.fx * p.x() + left * p.z() < 0.0; })) return false;
  if (all_outside([&](const Vec3& p) { return intr.fx * p.x() - right * p.z() > 0.0; })) return false;
  if (all_outside([&](const Vec3& p) { return intr.fy * p.y() + top * p.z() < 0.0; })) return false;
  if (all_outside([&](const Vec3& p) { return intr.fy * p.y() - bottom * p.z() > 0.0; })) return false;
  return true;
}

FusedView render_fused(const SubmapAtlas& atlas, const Pose& camera_world, const Intrinsics& intr) {
  intr.validate();
  const RenderParams& params = atlas.config().render;
  FusedView out{ColorImage(intr.width, intr.height, params.background), DepthImage(intr.width, intr.height, 0.0),
                ScalarImage(intr.width, intr.height, kUnobservedVariance), Image<int>(intr.width, intr.height, -1), {}};
  for (const Submap& s : atlas.submaps()) {
    const Pose cam = s.camera_in_anchor(camera_world);
    if (!box_in_frustum(s.field.grid.allocated_bounds(), cam, intr, params.t_max)) continue;
    out.candidates.push_back(s.id);
    const RenderedView view = render_view(s.field, cam, intr, params);
    for (std::size_t i = 0; i < view.color.size(); ++i) {
      if (!view.observed.data[i]) continue;
      if (view.uncertainty.data[i] < out.uncertainty.data[i] || out.winner.data[i] < 0) {
        out.color.data[i] = view.color.data[i];
        out.depth.data[i] = view.depth.data[i];
        out.uncertainty.data[i] = view.uncertainty.data[i];
        out.winner.data[i] = s.id;
      }
    }
  }
  return out;
}

std::optional<FieldQuery> fused_query(const SubmapAtlas& atlas, const Vec3& world_point) {
  std::optional<FieldQuery> best;
  std::vector<double> z;
  for (const Submap& s : atlas.submaps()) {
    const Vec3 local = s.anchor_pose.inverse().apply(world_point);
    const auto& grid = s.field.grid;
    if (!grid.contains(local)) continue;
    const std::int32_t leaf = grid.find_leaf(local);
    if (leaf < 0) continue;
    z.assign(static_cast<std::size_t>(grid.feature_dim()), 0.0);
    InterpolationRecord rec;
    grid.interpolate_in_leaf(leaf, local, z, rec);
    const double o = decode_occupancy(s.field.occupancy, z).occupancy;
    const double u = o * (1.0 - o);
    if (!best || u < best->uncertainty) {
      best = FieldQuery{o, decode_color(s.field.color, z).color.cwiseMax(0.0).cwiseMin(1.0), u, s.id};
    }
  }
  return best;
}

}  // namespace nimap
