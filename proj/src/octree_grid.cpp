#include "nimap/octree_grid.hpp"

#include "nimap/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nimap {

namespace {

std::uint64_t spread_bits(std::uint32_t v) {
  std::uint64_t x = v & 0x1fffffu;
  x = (x | (x << 32)) & 0x1f00000000ffffull;
  x = (x | (x << 16)) & 0x1f0000ff0000ffull;
  x = (x | (x << 8)) & 0x100f00f00f00f00full;
  x = (x | (x << 4)) & 0x10c30c30c30c30c3ull;
  x = (x | (x << 2)) & 0x1249249249249249ull;
  return x;
}

std::uint32_t compact_bits(std::uint64_t v) {
  v &= 0x1249249249249249ull;
  v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ull;
  v = (v ^ (v >> 4)) & 0x100f00f00f00f00full;
  v = (v ^ (v >> 8)) & 0x1f0000ff0000ffull;
  v = (v ^ (v >> 16)) & 0x1f00000000ffffull;
  v = (v ^ (v >> 32)) & 0x1fffffull;
  return static_cast<std::uint32_t>(v);
}

std::uint64_t node_key(int level, const std::array<std::uint32_t, 3>& c) {
  return MortonCode{morton_encode(c[0], c[1], c[2]), level}.locational();
}

constexpr char kGridTag[9] = "NMGRID\0\0";
constexpr std::uint32_t kGridVersion = 1;

}  // namespace

std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  constexpr std::uint32_t limit = 1u << kMaxMortonBits;
  if (x >= limit || y >= limit || z >= limit) {
    std::ostringstream msg;
    msg << "morton_encode: coordinate (" << x << ", " << y << ", " << z << ") exceeds 21 bits";
    throw std::out_of_range(msg.str());
  }
  return spread_bits(x) | (spread_bits(y) << 1) | (spread_bits(z) << 2);
}

std::array<std::uint32_t, 3> morton_decode(std::uint64_t code) {
  return {compact_bits(code), compact_bits(code >> 1), compact_bits(code >> 2)};
}

void GridConfig::validate() const {
  if (!(extent > 0.0)) throw std::invalid_argument("grid extent must be positive");
  if (max_depth < 1 || max_depth > 20) throw std::invalid_argument("grid max_depth must be in [1, 20]");
  if (active_levels < 1 || active_levels > kMaxActiveLevels || active_levels > max_depth + 1) {
    throw std::invalid_argument("grid active_levels must be in [1, 4] and <= max_depth + 1");
  }
  if (feature_dim < 1) throw std::invalid_argument("grid feature_dim must be positive");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("grid init_scale must be non-negative");
}

bool ray_box_interval(const Ray& ray, const Vec3& inv_dir, const Vec3& box_min, const Vec3& box_max,
                      double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (ray.direction[a] == 0.0) {
      if (ray.origin[a] < box_min[a] || ray.origin[a] > box_max[a]) return false;
      continue;
    }
    double ta = (box_min[a] - ray.origin[a]) * inv_dir[a];
    double tb = (box_max[a] - ray.origin[a]) * inv_dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t1 >= t0;
}

OctreeFeatureGrid::OctreeFeatureGrid(const GridConfig& config) : config_(config), rng_(config.seed) {
  config_.validate();
  min_corner_ = config_.center - Vec3::Constant(0.5 * config_.extent);
  corner_tables_.resize(static_cast<std::size_t>(config_.active_levels));
}

bool OctreeFeatureGrid::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a) {
    double rel = p[a] - min_corner_[a];
    if (!(rel >= 0.0 && rel < config_.extent)) return false;
  }
  return true;
}

std::uint64_t OctreeFeatureGrid::leaf_key(const Vec3& p) const {
  const double inv = 1.0 / leaf_size();
  const auto limit = static_cast<std::int64_t>((std::uint64_t{1} << config_.max_depth) - 1);
  std::array<std::uint32_t, 3> c{};
  for (int a = 0; a < 3; ++a) {
    auto v = static_cast<std::int64_t>(std::floor((p[a] - min_corner_[a]) * inv));
    c[a] = static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 0, limit));
  }
  return node_key(config_.max_depth, c);
}

std::int32_t OctreeFeatureGrid::find_node(const MortonCode& key) const {
  auto it = node_table_.find(key.locational());
  return it == node_table_.end() ? -1 : it->second;
}

std::int32_t OctreeFeatureGrid::find_leaf(const Vec3& p) const {
  if (!contains(p)) return -1;
  auto it = node_table_.find(leaf_key(p));
  return it == node_table_.end() ? -1 : it->second;
}

Aabb OctreeFeatureGrid::node_bounds(std::int32_t index) const {
  const OctreeNode& n = node(index);
  const double scale = std::ldexp(config_.extent, -n.level);
  Aabb box;
  box.empty = false;
  for (int a = 0; a < 3; ++a) {
    box.min[a] = min_corner_[a] + static_cast<double>(n.coord[a]) * scale;
    box.max[a] = min_corner_[a] + static_cast<double>(n.coord[a] + 1) * scale;
  }
  return box;
}

std::uint32_t OctreeFeatureGrid::acquire_corner(int level, const std::array<std::uint32_t, 3>& corner,
                                                bool initialize) {
  auto& table = corner_tables_[static_cast<std::size_t>(level - first_active_level())];
  const std::uint64_t key = morton_encode(corner[0], corner[1], corner[2]);
  auto [it, inserted] = table.try_emplace(key, static_cast<std::uint32_t>(slot_count_));
  if (!inserted) return it->second;
  ++slot_count_;
  const auto F = static_cast<std::size_t>(config_.feature_dim);
  features_.resize(slot_count_ * F, 0.0);
  gradients_.resize(slot_count_ * F, 0.0);
  touched_flag_.resize(slot_count_, 0);
  if (initialize) {
    std::uniform_real_distribution<double> dist(-config_.init_scale, config_.init_scale);
    for (std::size_t f = 0; f < F; ++f) features_[(slot_count_ - 1) * F + f] = dist(rng_);
  }
  return it->second;
}

std::int32_t OctreeFeatureGrid::create_node(int level, const std::array<std::uint32_t, 3>& coord,
                                            std::int32_t parent) {
  OctreeNode n;
  n.coord = coord;
  n.level = level;
  n.parent = parent;
  if (is_active_level(level)) {
    for (int k = 0; k < 8; ++k) {
      std::array<std::uint32_t, 3> corner{coord[0] + (k & 1), coord[1] + ((k >> 1) & 1), coord[2] + ((k >> 2) & 1)};
      n.corners[static_cast<std::size_t>(k)] = acquire_corner(level, corner, true);
    }
  }
  const auto index = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(n);
  node_table_.emplace(node_key(level, coord), index);
  if (parent >= 0) {
    const auto& pc = nodes_[static_cast<std::size_t>(parent)].coord;
    int child = static_cast<int>((coord[0] - 2 * pc[0]) | ((coord[1] - 2 * pc[1]) << 1) | ((coord[2] - 2 * pc[2]) << 2));
    nodes_[static_cast<std::size_t>(parent)].children[static_cast<std::size_t>(child)] = index;
  }
  if (level == config_.max_depth) {
    ++leaf_count_;
    grow_bounds(nodes_.back());
  }
  return index;
}

void OctreeFeatureGrid::grow_bounds(const OctreeNode& leaf) {
  Aabb box = node_bounds(static_cast<std::int32_t>(&leaf - nodes_.data()));
  if (allocated_bounds_.empty) {
    allocated_bounds_ = box;
    return;
  }
  allocated_bounds_.min = allocated_bounds_.min.cwiseMin(box.min);
  allocated_bounds_.max = allocated_bounds_.max.cwiseMax(box.max);
}

InsertResult OctreeFeatureGrid::insert_points(std::span<const Vec3> points) {
  InsertResult result;
  const int depth = config_.max_depth;
  const double inv = 1.0 / leaf_size();
  const auto limit = static_cast<std::int64_t>((std::uint64_t{1} << depth) - 1);
  for (const Vec3& p : points) {
    if (!p.allFinite() || !contains(p)) {
      ++result.dropped;
      continue;
    }
    std::array<std::uint32_t, 3> leaf{};
    for (int a = 0; a < 3; ++a) {
      auto v = static_cast<std::int64_t>(std::floor((p[a] - min_corner_[a]) * inv));
      leaf[a] = static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 0, limit));
    }
    if (node_table_.contains(node_key(depth, leaf))) continue;
    std::int32_t parent = -1;
    for (int level = 0; level <= depth; ++level) {
      const int shift = depth - level;
      std::array<std::uint32_t, 3> c{leaf[0] >> shift, leaf[1] >> shift, leaf[2] >> shift};
      auto it = node_table_.find(node_key(level, c));
      if (it != node_table_.end()) {
        parent = it->second;
        continue;
      }
      parent = create_node(level, c, parent);
      ++result.new_nodes;
    }
  }
  if (result.new_nodes > 0) ++structure_version_;
  return result;
}

void OctreeFeatureGrid::trilinear(const OctreeNode& n, const Vec3& p, InterpolationRecord::Level& lvl,
                                  std::span<double> feature) const {
  const double inv = static_cast<double>(std::uint64_t{1} << n.level) / config_.extent;
  double u[3];
  for (int a = 0; a < 3; ++a) {
    u[a] = std::clamp((p[a] - min_corner_[a]) * inv - static_cast<double>(n.coord[a]), 0.0, 1.0);
  }
  const auto F = static_cast<std::size_t>(config_.feature_dim);
  for (int k = 0; k < 8; ++k) {
    const double w = ((k & 1) ? u[0] : 1.0 - u[0]) * (((k >> 1) & 1) ? u[1] : 1.0 - u[1]) *
                     (((k >> 2) & 1) ? u[2] : 1.0 - u[2]);
    const std::uint32_t slot = n.corners[static_cast<std::size_t>(k)];
    lvl.slots[static_cast<std::size_t>(k)] = slot;
    lvl.weights[static_cast<std::size_t>(k)] = w;
    const double* src = features_.data() + static_cast<std::size_t>(slot) * F;
    for (std::size_t f = 0; f < F; ++f) feature[f] += w * src[f];
  }
  lvl.allocated = true;
}

void OctreeFeatureGrid::interpolate_in_leaf(std::int32_t leaf, const Vec3& p, std::span<double> feature,
                                            InterpolationRecord& record) const {
  std::fill(feature.begin(), feature.end(), 0.0);
  record.level_count = config_.active_levels;
  record.structure_version = structure_version_;
  record.coverage = Coverage::observed;
  std::int32_t index = leaf;
  // Levels are stored deepest first.
  for (int i = 0; i < config_.active_levels; ++i) {
    const OctreeNode& n = nodes_[static_cast<std::size_t>(index)];
    trilinear(n, p, record.levels[static_cast<std::size_t>(i)], feature);
    index = n.parent;
  }
}

Coverage OctreeFeatureGrid::interpolate(const Vec3& p, std::span<double> feature,
                                        InterpolationRecord& record) const {
  if (!contains(p)) {
    std::ostringstream msg;
    msg << "interpolate: point (" << p.transpose() << ") outside grid extent";
    throw std::out_of_range(msg.str());
  }
  if (feature.size() != static_cast<std::size_t>(config_.feature_dim)) {
    throw std::invalid_argument("interpolate: feature buffer has wrong dimension");
  }
  std::int32_t leaf = find_leaf(p);
  if (leaf >= 0) {
    interpolate_in_leaf(leaf, p, feature, record);
    return record.coverage;
  }
  std::fill(feature.begin(), feature.end(), 0.0);
  record.level_count = config_.active_levels;
  record.structure_version = structure_version_;
  const double inv_leaf = 1.0 / leaf_size();
  const auto limit = static_cast<std::int64_t>((std::uint64_t{1} << config_.max_depth) - 1);
  std::array<std::uint32_t, 3> lc{};
  for (int a = 0; a < 3; ++a) {
    auto v = static_cast<std::int64_t>(std::floor((p[a] - min_corner_[a]) * inv_leaf));
    lc[a] = static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 0, limit));
  }
  int allocated = 0;
  for (int i = 0; i < config_.active_levels; ++i) {
    const int level = config_.max_depth - i;
    const int shift = config_.max_depth - level;
    auto& lvl = record.levels[static_cast<std::size_t>(i)];
    lvl.allocated = false;
    auto it = node_table_.find(node_key(level, {lc[0] >> shift, lc[1] >> shift, lc[2] >> shift}));
    if (it == node_table_.end()) continue;
    trilinear(nodes_[static_cast<std::size_t>(it->second)], p, lvl, feature);
    ++allocated;
  }
  record.coverage = allocated == 0                      ? Coverage::unobserved
                    : allocated == config_.active_levels ? Coverage::observed
                                                         : Coverage::partial;
  return record.coverage;
}

void OctreeFeatureGrid::accumulate_slot_gradient(std::uint32_t slot, std::span<const double> grad) {
  const auto F = static_cast<std::size_t>(config_.feature_dim);
  double* dst = gradients_.data() + static_cast<std::size_t>(slot) * F;
  for (std::size_t f = 0; f < F; ++f) dst[f] += grad[f];
  if (!touched_flag_[slot]) {
    touched_flag_[slot] = 1;
    touched_.push_back(slot);
  }
}

void OctreeFeatureGrid::scatter_gradient(const InterpolationRecord& record, std::span<const double> grad) {
  if (record.structure_version != structure_version_) {
    throw std::logic_error("scatter_gradient: interpolation record is stale (grid structure changed)");
  }
  if (grad.size() != static_cast<std::size_t>(config_.feature_dim)) {
    throw std::invalid_argument("scatter_gradient: gradient has wrong dimension");
  }
  const auto F = static_cast<std::size_t>(config_.feature_dim);
  for (int i = 0; i < record.level_count; ++i) {
    const auto& lvl = record.levels[static_cast<std::size_t>(i)];
    if (!lvl.allocated) continue;
    for (std::size_t k = 0; k < 8; ++k) {
      const std::uint32_t slot = lvl.slots[k];
      const double w = lvl.weights[k];
      double* dst = gradients_.data() + static_cast<std::size_t>(slot) * F;
      for (std::size_t f = 0; f < F; ++f) dst[f] += w * grad[f];
      if (!touched_flag_[slot]) {
        touched_flag_[slot] = 1;
        touched_.push_back(slot);
      }
    }
  }
}

void OctreeFeatureGrid::zero_gradients() {
  const auto F = static_cast<std::size_t>(config_.feature_dim);
  for (std::uint32_t slot : touched_) {
    std::fill_n(gradients_.begin() + static_cast<std::ptrdiff_t>(slot * F), F, 0.0);
    touched_flag_[slot] = 0;
  }
  touched_.clear();
}

std::uint32_t OctreeFeatureGrid::corner_slot(int level, std::uint32_t x, std::uint32_t y, std::uint32_t z) const {
  if (!is_active_level(level)) return kNoSlot;
  const auto& table = corner_tables_[static_cast<std::size_t>(level - first_active_level())];
  auto it = table.find(morton_encode(x, y, z));
  return it == table.end() ? kNoSlot : it->second;
}

void OctreeFeatureGrid::descend(std::int32_t index, const Ray& ray, const Vec3& inv_dir, double t_min,
                                double t_max, std::vector<VoxelHit>& out) const {
  const OctreeNode& n = nodes_[static_cast<std::size_t>(index)];
  if (n.level == config_.max_depth) {
    Aabb box = node_bounds(index);
    double t0 = 0.0;
    double t1 = 0.0;
    if (!ray_box_interval(ray, inv_dir, box.min, box.max, t0, t1)) return;
    t0 = std::max(t0, t_min);
    t1 = std::min(t1, t_max);
    if (t1 > t0) out.push_back({index, t0, t1});
    return;
  }
  struct Candidate {
    std::int32_t node;
    double t0;
  };
  std::array<Candidate, 8> cand{};
  int count = 0;
  for (std::int32_t child : n.children) {
    if (child < 0) continue;
    Aabb box = node_bounds(child);
    double t0 = 0.0;
    double t1 = 0.0;
    if (!ray_box_interval(ray, inv_dir, box.min, box.max, t0, t1)) continue;
    t0 = std::max(t0, t_min);
    t1 = std::min(t1, t_max);
    if (!(t1 > t0)) continue;
    int pos = count++;
    while (pos > 0 && cand[static_cast<std::size_t>(pos - 1)].t0 > t0) {
      cand[static_cast<std::size_t>(pos)] = cand[static_cast<std::size_t>(pos - 1)];
      --pos;
    }
    cand[static_cast<std::size_t>(pos)] = {child, t0};
  }
  for (int i = 0; i < count; ++i) descend(cand[static_cast<std::size_t>(i)].node, ray, inv_dir, t_min, t_max, out);
}

void OctreeFeatureGrid::ray_voxel_intersections(const Ray& ray, double t_min, double t_max,
                                                std::vector<VoxelHit>& out) const {
  out.clear();
  if (nodes_.empty()) return;
  Vec3 inv_dir = ray.direction.cwiseInverse();
  Aabb root = node_bounds(0);
  double t0 = 0.0;
  double t1 = 0.0;
  if (!ray_box_interval(ray, inv_dir, root.min, root.max, t0, t1)) return;
  if (!(std::min(t1, t_max) > std::max(t0, t_min))) return;
  descend(0, ray, inv_dir, t_min, t_max, out);
}

std::vector<VoxelHit> OctreeFeatureGrid::ray_voxel_intersections(const Ray& ray, double t_min, double t_max) const {
  std::vector<VoxelHit> out;
  ray_voxel_intersections(ray, t_min, t_max, out);
  return out;
}

void OctreeFeatureGrid::save(std::ostream& out) const {
  io::write_tag(out, kGridTag, kGridVersion);
  io::write<double>(out, config_.extent);
  for (int a = 0; a < 3; ++a) io::write<double>(out, config_.center[a]);
  io::write<std::int32_t>(out, config_.max_depth);
  io::write<std::int32_t>(out, config_.active_levels);
  io::write<std::int32_t>(out, config_.feature_dim);
  io::write<double>(out, config_.init_scale);
  io::write<std::uint64_t>(out, config_.seed);

  std::vector<std::uint64_t> node_keys;
  node_keys.reserve(nodes_.size());
  for (const auto& n : nodes_) node_keys.push_back(node_key(n.level, n.coord));
  io::write_array<std::uint64_t>(out, node_keys);

  // Slot table: (level offset, corner morton) in slot order.
  std::vector<std::uint64_t> slot_keys(slot_count_);
  std::vector<std::uint8_t> slot_levels(slot_count_);
  for (std::size_t l = 0; l < corner_tables_.size(); ++l) {
    for (const auto& [key, slot] : corner_tables_[l]) {
      slot_keys[slot] = key;
      slot_levels[slot] = static_cast<std::uint8_t>(l);
    }
  }
  io::write_array<std::uint64_t>(out, slot_keys);
  io::write_array<std::uint8_t>(out, slot_levels);
  io::write_array<double>(out, features_);
}

OctreeFeatureGrid OctreeFeatureGrid::load(std::istream& in) {
  io::expect_tag(in, kGridTag, kGridVersion);
  GridConfig cfg;
  cfg.extent = io::read<double>(in);
  for (int a = 0; a < 3; ++a) cfg.center[a] = io::read<double>(in);
  cfg.max_depth = io::read<std::int32_t>(in);
  cfg.active_levels = io::read<std::int32_t>(in);
  cfg.feature_dim = io::read<std::int32_t>(in);
  cfg.init_scale = io::read<double>(in);
  cfg.seed = io::read<std::uint64_t>(in);
  OctreeFeatureGrid grid(cfg);

  auto node_keys = io::read_array<std::uint64_t>(in);
  auto slot_keys = io::read_array<std::uint64_t>(in);
  auto slot_levels = io::read_array<std::uint8_t>(in);
  auto features = io::read_array<double>(in);
  const auto F = static_cast<std::size_t>(cfg.feature_dim);
  if (slot_levels.size() != slot_keys.size() || features.size() != slot_keys.size() * F) {
    throw io::FormatError("grid chunk: inconsistent slot table");
  }
  for (std::size_t s = 0; s < slot_keys.size(); ++s) {
    if (slot_levels[s] >= grid.corner_tables_.size()) throw io::FormatError("grid chunk: bad corner level");
    grid.corner_tables_[slot_levels[s]].emplace(slot_keys[s], static_cast<std::uint32_t>(s));
  }
  grid.slot_count_ = slot_keys.size();
  grid.features_ = std::move(features);
  grid.gradients_.assign(grid.features_.size(), 0.0);
  grid.touched_flag_.assign(grid.slot_count_, 0);

  for (std::uint64_t key : node_keys) {
    if (key == 0) throw io::FormatError("grid chunk: invalid node key");
    const int level = (63 - std::countl_zero(key)) / 3;
    if (level > cfg.max_depth) throw io::FormatError("grid chunk: node level out of range");
    const std::uint64_t code = key ^ (std::uint64_t{1} << (3 * level));
    auto c = morton_decode(code);
    std::int32_t parent = -1;
    if (level > 0) {
      parent = grid.find_node({morton_encode(c[0] >> 1, c[1] >> 1, c[2] >> 1), level - 1});
      if (parent < 0) throw io::FormatError("grid chunk: node without parent");
    }
    const std::size_t before = grid.slot_count_;
    grid.create_node(level, c, parent);
    if (grid.slot_count_ != before) throw io::FormatError("grid chunk: node references unknown corner");
  }
  grid.structure_version_ = 1;
  return grid;
}

}  // namespace nimap
