#include "nimap/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <unordered_map>

namespace nimap {

namespace {

// Corner index = x + 2y + 4z. Every tetrahedron contains the 0-7 diagonal.
constexpr std::array<std::array<int, 4>, 6> kTets{{
    {0, 1, 3, 7},
    {0, 3, 2, 7},
    {0, 2, 6, 7},
    {0, 6, 4, 7},
    {0, 4, 5, 7},
    {0, 5, 1, 7},
}};

struct Lattice {
  int nx, ny, nz;
  std::uint64_t index(int x, int y, int z) const {
    return (static_cast<std::uint64_t>(z) * (ny + 1) + y) * (nx + 1) + x;
  }
};

}  // namespace

TriangleMesh extract_isosurface(const SampledField& field, const Aabb& box, int resolution, double iso) {
  if (resolution < 1) throw std::invalid_argument("mesh resolution must be >= 1");
  if (box.empty) throw std::invalid_argument("mesh bounds are empty");
  const Vec3 size = box.max - box.min;
  const double step = size.maxCoeff() / resolution;
  if (!(step > 0.0)) throw std::invalid_argument("mesh bounds are degenerate");
  Lattice L{std::max(1, static_cast<int>(std::ceil(size.x() / step))),
            std::max(1, static_cast<int>(std::ceil(size.y() / step))),
            std::max(1, static_cast<int>(std::ceil(size.z() / step)))};
  auto position = [&](std::uint64_t idx) {
    const auto x = static_cast<int>(idx % static_cast<std::uint64_t>(L.nx + 1));
    const auto y = static_cast<int>((idx / static_cast<std::uint64_t>(L.nx + 1)) % static_cast<std::uint64_t>(L.ny + 1));
    const auto z = static_cast<int>(idx / (static_cast<std::uint64_t>(L.nx + 1) * (L.ny + 1)));
    return Vec3(box.min.x() + x * step, box.min.y() + y * step, box.min.z() + z * step);
  };

  // Two z-slabs of samples at a time keep memory proportional to one layer.
  const std::size_t layer = static_cast<std::size_t>(L.nx + 1) * (L.ny + 1);
  std::vector<std::optional<FieldSample>> below(layer), above(layer);
  auto fill = [&](std::vector<std::optional<FieldSample>>& slab, int z) {
    for (int y = 0; y <= L.ny; ++y)
      for (int x = 0; x <= L.nx; ++x) slab[static_cast<std::size_t>(y) * (L.nx + 1) + x] = field(position(L.index(x, y, z)));
  };

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> welded;  // key: a * N + b with a < b
  const std::uint64_t n_points = layer * static_cast<std::uint64_t>(L.nz + 1);
  auto edge_vertex = [&](std::uint64_t a, std::uint64_t b, const FieldSample& fa, const FieldSample& fb) {
    if (a > b) return -1;  // callers pass ordered pairs
    const std::uint64_t key = a * n_points + b;
    auto it = welded.find(key);
    if (it != welded.end()) return it->second;
    const double denom = fb.value - fa.value;
    const double t = denom == 0.0 ? 0.5 : std::clamp((iso - fa.value) / denom, 0.0, 1.0);
    mesh.vertices.push_back((1.0 - t) * position(a) + t * position(b));
    mesh.colors.push_back((1.0 - t) * fa.color + t * fb.color);
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    welded.emplace(key, id);
    return id;
  };

  fill(below, 0);
  for (int z = 0; z < L.nz; ++z) {
    fill(above, z + 1);
    for (int y = 0; y < L.ny; ++y) {
      for (int x = 0; x < L.nx; ++x) {
        std::array<std::uint64_t, 8> idx;
        std::array<const FieldSample*, 8> s;
        bool complete = true;
        for (int c = 0; c < 8 && complete; ++c) {
          const int cx = x + (c & 1), cy = y + ((c >> 1) & 1), cz = (c >> 2) & 1;
          idx[static_cast<std::size_t>(c)] = L.index(cx, cy, z + cz);
          const auto& slab = cz ? above : below;
          const auto& opt = slab[static_cast<std::size_t>(cy) * (L.nx + 1) + cx];
          if (!opt) complete = false;
          else s[static_cast<std::size_t>(c)] = &*opt;
        }
        if (!complete) continue;
        for (const auto& tet : kTets) {
          std::array<int, 4> in, out;
          int n_in = 0, n_out = 0;
          for (int k : tet) {
            if (s[static_cast<std::size_t>(k)]->value > iso) in[static_cast<std::size_t>(n_in++)] = k;
            else out[static_cast<std::size_t>(n_out++)] = k;
          }
          if (n_in == 0 || n_out == 0) continue;
          auto vert = [&](int a, int b) {
            const auto ia = idx[static_cast<std::size_t>(a)], ib = idx[static_cast<std::size_t>(b)];
            const FieldSample& sa = *s[static_cast<std::size_t>(a)];
            const FieldSample& sb = *s[static_cast<std::size_t>(b)];
            return ia < ib ? edge_vertex(ia, ib, sa, sb) : edge_vertex(ib, ia, sb, sa);
          };
          Vec3 in_centroid = Vec3::Zero(), out_centroid = Vec3::Zero();
          for (int k = 0; k < n_in; ++k) in_centroid += position(idx[static_cast<std::size_t>(in[static_cast<std::size_t>(k)])]);
          for (int k = 0; k < n_out; ++k) out_centroid += position(idx[static_cast<std::size_t>(out[static_cast<std::size_t>(k)])]);
          const Vec3 outward = out_centroid / n_out - in_centroid / n_in;
          auto emit = [&](int a, int b, int c) {
            const Vec3 n = (mesh.vertices[static_cast<std::size_t>(b)] - mesh.vertices[static_cast<std::size_t>(a)])
                               .cross(mesh.vertices[static_cast<std::size_t>(c)] - mesh.vertices[static_cast<std::size_t>(a)]);
            if (n.squaredNorm() == 0.0) return;
            if (n.dot(outward) < 0.0) std::swap(b, c);
            mesh.triangles.push_back({a, b, c});
          };
          if (n_in == 1) {
            emit(vert(in[0], out[0]), vert(in[0], out[1]), vert(in[0], out[2]));
          } else if (n_in == 3) {
            emit(vert(out[0], in[0]), vert(out[0], in[1]), vert(out[0], in[2]));
          } else {
            const int a = vert(in[0], out[0]);
            const int b = vert(in[0], out[1]);
            const int c = vert(in[1], out[1]);
            const int d = vert(in[1], out[0]);
            emit(a, b, c);
            emit(a, c, d);
          }
        }
      }
    }
    std::swap(below, above);
  }
  return mesh;
}

Aabb atlas_bounds(const SubmapAtlas& atlas) {
  Aabb out;
  for (const Submap& s : atlas.submaps()) {
    const Aabb& b = s.field.grid.allocated_bounds();
    if (b.empty) continue;
    for (int k = 0; k < 8; ++k) {
      const Vec3 corner((k & 1) ? b.max.x() : b.min.x(), (k & 2) ? b.max.y() : b.min.y(),
                        (k & 4) ? b.max.z() : b.min.z());
      const Vec3 w = s.anchor_pose.apply(corner);
      if (out.empty) {
        out.min = out.max = w;
        out.empty = false;
      } else {
        out.min = out.min.cwiseMin(w);
        out.max = out.max.cwiseMax(w);
      }
    }
  }
  return out;
}

TriangleMesh mesh_atlas(const SubmapAtlas& atlas, int resolution) {
  const Aabb bounds = atlas_bounds(atlas);
  if (bounds.empty) throw std::runtime_error("cannot mesh an empty map");
  SampledField field = [&atlas](const Vec3& p) -> std::optional<FieldSample> {
    auto q = fused_query(atlas, p);
    if (!q) return std::nullopt;
    return FieldSample{q->occupancy, q->color};
  };
  return extract_isosurface(field, bounds, resolution, 0.5);
}

void write_ply(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(9);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    const Vec3 c = mesh.colors[i].cwiseMax(0.0).cwiseMin(1.0) * 255.0;
    out << static_cast<float>(v.x()) << ' ' << static_cast<float>(v.y()) << ' ' << static_cast<float>(v.z()) << ' '
        << std::lround(c.x()) << ' ' << std::lround(c.y()) << ' ' << std::lround(c.z()) << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace nimap
