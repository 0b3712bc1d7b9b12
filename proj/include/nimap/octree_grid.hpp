#pragma once

#include "nimap/geometry.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

namespace nimap {

inline constexpr int kMaxMortonBits = 21;
inline constexpr int kMaxActiveLevels = 4;
inline constexpr std::uint32_t kNoSlot = 0xffffffffu;

/// Interleaved 3-D key; bit 3k holds bit k of x, 3k+1 of y, 3k+2 of z.
struct MortonCode {
  std::uint64_t code = 0;
  int level = 0;

  bool valid() const { return level >= 0 && level <= kMaxMortonBits && code < (std::uint64_t{1} << (3 * level)); }
  /// Code with a sentinel bit above the payload, unique across levels.
  std::uint64_t locational() const { return code | (std::uint64_t{1} << (3 * level)); }
};

/// Throws std::out_of_range when any coordinate needs more than 21 bits.
std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z);
std::array<std::uint32_t, 3> morton_decode(std::uint64_t code);

struct GridConfig {
  double extent = 6.4;          // cube side, meters
  Vec3 center = Vec3::Zero();   // cube center in the submap frame
  int max_depth = 8;
  int active_levels = 2;        // deepest N levels carry features
  int feature_dim = 16;
  double init_scale = 1e-2;     // features start uniform in [-s, s]
  std::uint64_t seed = 1;

  void validate() const;
};

struct OctreeNode {
  std::array<std::uint32_t, 3> coord{};  // cell index at `level`
  int level = 0;
  std::int32_t parent = -1;
  std::array<std::int32_t, 8> children{-1, -1, -1, -1, -1, -1, -1, -1};
  std::array<std::uint32_t, 8> corners{kNoSlot, kNoSlot, kNoSlot, kNoSlot,
                                       kNoSlot, kNoSlot, kNoSlot, kNoSlot};
};

enum class Coverage { observed, partial, unobserved };

/// Contributing corner slots and trilinear weights of one interpolation.
struct InterpolationRecord {
  struct Level {
    std::array<std::uint32_t, 8> slots{};
    std::array<double, 8> weights{};
    bool allocated = false;
  };
  std::array<Level, kMaxActiveLevels> levels{};
  int level_count = 0;
  std::uint64_t structure_version = 0;
  Coverage coverage = Coverage::unobserved;
};

struct InsertResult {
  std::size_t new_nodes = 0;
  std::size_t dropped = 0;
};

struct VoxelHit {
  std::int32_t node = -1;
  double t_entry = 0.0;
  double t_exit = 0.0;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  bool empty = true;
};

/// Sparse incremental octree with features on the corners of nodes at the
/// active levels. Corners are shared between neighbouring nodes through a
/// per-level corner table, so the same spatial corner always resolves to the
/// same feature slot.
class OctreeFeatureGrid {
 public:
  explicit OctreeFeatureGrid(const GridConfig& config = {});

  const GridConfig& config() const { return config_; }
  int max_depth() const { return config_.max_depth; }
  int feature_dim() const { return config_.feature_dim; }
  int first_active_level() const { return config_.max_depth - config_.active_levels + 1; }
  bool is_active_level(int level) const { return level >= first_active_level() && level <= config_.max_depth; }
  Vec3 min_corner() const { return min_corner_; }
  double cell_size(int level) const { return config_.extent / static_cast<double>(std::uint64_t{1} << level); }
  double leaf_size() const { return cell_size(config_.max_depth); }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_count() const { return leaf_count_; }
  std::size_t slot_count() const { return slot_count_; }
  const OctreeNode& node(std::int32_t index) const { return nodes_[static_cast<std::size_t>(index)]; }
  std::uint64_t structure_version() const { return structure_version_; }

  bool contains(const Vec3& p) const;
  /// Index of the node at (level, morton), or -1.
  std::int32_t find_node(const MortonCode& key) const;
  /// Allocated leaf containing p, or -1.
  std::int32_t find_leaf(const Vec3& p) const;
  /// Leaf cell key (locational code) of p; p must be inside the extent.
  std::uint64_t leaf_key(const Vec3& p) const;
  Aabb node_bounds(std::int32_t index) const;
  /// Bounds of all allocated leaves.
  const Aabb& allocated_bounds() const { return allocated_bounds_; }

  InsertResult insert_points(std::span<const Vec3> points);

  /// Sum over active levels of trilinear corner features at p. Throws
  /// std::out_of_range when p lies outside the extent.
  Coverage interpolate(const Vec3& p, std::span<double> feature, InterpolationRecord& record) const;
  /// Fast path for a point already known to lie in allocated leaf `leaf`.
  void interpolate_in_leaf(std::int32_t leaf, const Vec3& p, std::span<double> feature,
                           InterpolationRecord& record) const;

  /// Accumulates weight * grad into every contributing corner's gradient
  /// buffer. Throws std::logic_error on a stale record.
  void scatter_gradient(const InterpolationRecord& record, std::span<const double> grad);
  /// Adds a per-slot gradient vector directly.
  void accumulate_slot_gradient(std::uint32_t slot, std::span<const double> grad);

  /// Allocated leaves hit by the ray with positive-length intervals inside
  /// [t_min, t_max], ordered front to back.
  std::vector<VoxelHit> ray_voxel_intersections(const Ray& ray, double t_min, double t_max) const;
  void ray_voxel_intersections(const Ray& ray, double t_min, double t_max, std::vector<VoxelHit>& out) const;

  std::span<double> features() { return features_; }
  std::span<const double> features() const { return features_; }
  std::span<double> slot_feature(std::uint32_t slot) {
    return {features_.data() + static_cast<std::size_t>(slot) * config_.feature_dim,
            static_cast<std::size_t>(config_.feature_dim)};
  }
  std::span<double> gradients() { return gradients_; }
  const std::vector<std::uint32_t>& touched_slots() const { return touched_; }
  void zero_gradients();

  /// Slot of the corner at integer corner coordinates on an active level, or kNoSlot.
  std::uint32_t corner_slot(int level, std::uint32_t x, std::uint32_t y, std::uint32_t z) const;

  void save(std::ostream& out) const;
  static OctreeFeatureGrid load(std::istream& in);

 private:
  std::int32_t create_node(int level, const std::array<std::uint32_t, 3>& coord, std::int32_t parent);
  std::uint32_t acquire_corner(int level, const std::array<std::uint32_t, 3>& corner, bool initialize);
  void descend(std::int32_t index, const Ray& ray, const Vec3& inv_dir, double t_min, double t_max,
               std::vector<VoxelHit>& out) const;
  void trilinear(const OctreeNode& node, const Vec3& p, InterpolationRecord::Level& level,
                 std::span<double> feature) const;
  void grow_bounds(const OctreeNode& leaf);

  GridConfig config_;
  Vec3 min_corner_;
  std::vector<OctreeNode> nodes_;
  std::unordered_map<std::uint64_t, std::int32_t> node_table_;
  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> corner_tables_;  // per active level
  std::vector<double> features_;
  std::vector<double> gradients_;
  std::vector<std::uint8_t> touched_flag_;
  std::vector<std::uint32_t> touched_;
  std::size_t slot_count_ = 0;
  std::size_t leaf_count_ = 0;
  std::uint64_t structure_version_ = 0;
  Aabb allocated_bounds_;
  std::mt19937_64 rng_;
};

/// Slab test against an axis-aligned box; returns false when the ray misses.
bool ray_box_interval(const Ray& ray, const Vec3& inv_dir, const Vec3& box_min, const Vec3& box_max,
                      double& t0, double& t1);

}  // namespace nimap
