#pragma once

#include "nimap/geometry.hpp"
#include "nimap/octree_grid.hpp"
#include "nimap/submaps.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nimap {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> colors;
  std::vector<std::array<int, 3>> triangles;
};

struct FieldSample {
  double value = 0.0;
  Vec3 color = Vec3::Zero();
};

/// Returns nullopt where the field is undefined; cells touching such a
/// point are skipped.
using SampledField = std::function<std::optional<FieldSample>(const Vec3&)>;

/// Iso-surface of `field` over `box` on a regular lattice with `resolution`
/// cells along the longest box side. Each cube is split into six
/// tetrahedra sharing its main diagonal, which keeps neighbouring cubes
/// consistent and avoids the ambiguous cases of the 256-entry cube table.
/// Vertices on shared lattice edges are welded. Triangles face the side
/// with the lower value.
TriangleMesh extract_isosurface(const SampledField& field, const Aabb& box, int resolution, double iso);

/// Fused-occupancy surface at 0.5 over the world-frame bounds of every
/// submap. Throws std::runtime_error for an empty map.
TriangleMesh mesh_atlas(const SubmapAtlas& atlas, int resolution);

/// World-frame bounds of all allocated leaves.
Aabb atlas_bounds(const SubmapAtlas& atlas);

/// ASCII PLY with float positions and uchar vertex colors.
void write_ply(const std::string& path, const TriangleMesh& mesh);

}  // namespace nimap
