#include "nimap/scene_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nimap {

namespace {

double box_sdf(const Vec3& p, const Vec3& half) {
  Vec3 q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

Primitive make_primitive(Primitive::Kind kind, const Vec3& center, const Vec3& size, ColorFunction color,
                         double yaw = 0.0) {
  Primitive p;
  p.kind = kind;
  p.pose = Pose(rot_z(yaw).rotation(), center);
  p.size = size;
  p.color = color;
  return p;
}

}  // namespace

Vec3 ColorFunction::eval(const Vec3& local) const {
  switch (kind) {
    case Kind::constant:
      return primary;
    case Kind::gradient: {
      const double span = to - from;
      const double s = span == 0.0 ? 0.0 : std::clamp((local[axis] - from) / span, 0.0, 1.0);
      return (1.0 - s) * primary + s * secondary;
    }
    case Kind::checker: {
      const double cell = 0.5 * period;
      long parity = 0;
      for (int a = 0; a < 3; ++a) parity += static_cast<long>(std::floor((local[a] + phase) / cell));
      return (parity & 1) ? secondary : primary;
    }
  }
  return primary;
}

double Primitive::signed_distance_local(const Vec3& local) const {
  switch (kind) {
    case Kind::sphere:
      return local.norm() - size.x();
    case Kind::box:
      return box_sdf(local, 0.5 * size);
    case Kind::room:
      return -box_sdf(local, 0.5 * size);
  }
  return std::numeric_limits<double>::infinity();
}

std::string to_string(Primitive::Kind kind) {
  switch (kind) {
    case Primitive::Kind::sphere:
      return "sphere";
    case Primitive::Kind::box:
      return "box";
    case Primitive::Kind::room:
      return "room";
  }
  return "unknown";
}

void SceneSpec::validate() const {
  if (primitives.empty()) throw std::invalid_argument("scene needs at least one primitive");
  for (const auto& p : primitives) {
    if (!(p.size.minCoeff() > 0.0) || !p.size.allFinite()) {
      throw std::invalid_argument("scene primitive dimensions must be positive and finite");
    }
    if (!p.pose.translation().allFinite()) throw std::invalid_argument("scene primitive pose must be finite");
    if (p.color.kind == ColorFunction::Kind::checker && !(p.color.period > 0.0)) {
      throw std::invalid_argument("checker period must be positive");
    }
  }
  if (!(depth_noise >= 0.0)) throw std::invalid_argument("depth noise must be non-negative");
}

SdfSample sdf(const SceneSpec& scene, const Vec3& p) {
  SdfSample best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& prim = scene.primitives[i];
    const Vec3 local = prim.pose.rotation().transpose() * (p - prim.pose.translation());
    const double d = prim.signed_distance_local(local);
    if (d < best.distance) {
      best.distance = d;
      best.primitive = static_cast<int>(i);
    }
  }
  if (best.primitive >= 0) {
    const Primitive& prim = scene.primitives[static_cast<std::size_t>(best.primitive)];
    best.color = prim.color.eval(prim.pose.rotation().transpose() * (p - prim.pose.translation()));
  }
  return best;
}

std::optional<SurfaceHit> raycast(const SceneSpec& scene, const Ray& ray, double t_max) {
  if (!(t_max > 0.0)) throw std::invalid_argument("raycast: t_max must be positive");
  constexpr double kEps = 1e-10;
  constexpr int kMaxSteps = 200000;
  double t = 0.0;
  for (int step = 0; step < kMaxSteps && t <= t_max; ++step) {
    const Vec3 p = ray.at(t);
    const SdfSample s = sdf(scene, p);
    if (s.distance < 0.0) {
      // Started inside a solid; no valid surface in front of the camera.
      if (step == 0) return std::nullopt;
      return SurfaceHit{t, s.color};
    }
    if (s.distance < kEps) return SurfaceHit{t, s.color};
    t += s.distance;
  }
  return std::nullopt;
}

GroundTruthFrame render_gt_frame(const SceneSpec& scene, const Pose& pose, const Intrinsics& intr, double t_max,
                                 std::mt19937_64* noise) {
  intr.validate();
  GroundTruthFrame frame{ColorImage(intr.width, intr.height, scene.background), DepthImage(intr.width, intr.height, 0.0)};
  std::normal_distribution<double> gauss(0.0, scene.depth_noise);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      auto hit = raycast(scene, pixel_to_ray(intr, pose, u, v), t_max);
      if (!hit) continue;
      double depth = hit->depth;
      if (noise && scene.depth_noise > 0.0) depth = std::max(1e-6, depth + gauss(*noise));
      frame.depth.at(u, v) = depth;
      frame.color.at(u, v) = hit->color;
    }
  }
  return frame;
}

SceneSpec default_room_scene() {
  SceneSpec scene;
  scene.background = Vec3(0.0, 0.0, 0.0);
  ColorFunction walls;
  walls.kind = ColorFunction::Kind::checker;
  walls.primary = Vec3(0.78, 0.74, 0.66);
  walls.secondary = Vec3(0.46, 0.52, 0.60);
  walls.period = 0.5;
  walls.phase = 0.125;
  scene.primitives.push_back(make_primitive(Primitive::Kind::room, {0.0, 0.0, 1.5}, {6.0, 6.0, 3.0}, walls));

  ColorFunction table;
  table.kind = ColorFunction::Kind::gradient;
  table.primary = Vec3(0.55, 0.35, 0.20);
  table.secondary = Vec3(0.80, 0.62, 0.40);
  table.axis = 2;
  table.from = -0.4;
  table.to = 0.4;
  scene.primitives.push_back(
      make_primitive(Primitive::Kind::box, {1.9, 1.6, 0.4}, {1.2, 0.7, 0.8}, table, 0.3));

  ColorFunction ball;
  ball.primary = Vec3(0.85, 0.45, 0.25);
  scene.primitives.push_back(make_primitive(Primitive::Kind::sphere, {-1.8, 1.7, 0.55}, {0.55, 0.55, 0.55}, ball));

  ColorFunction cabinet;
  cabinet.kind = ColorFunction::Kind::checker;
  cabinet.primary = Vec3(0.30, 0.55, 0.40);
  cabinet.secondary = Vec3(0.50, 0.70, 0.55);
  cabinet.period = 0.4;
  cabinet.phase = 0.1;
  scene.primitives.push_back(
      make_primitive(Primitive::Kind::box, {1.8, -1.9, 0.6}, {0.7, 0.7, 1.2}, cabinet, -0.4));

  ColorFunction lamp;
  lamp.kind = ColorFunction::Kind::gradient;
  lamp.primary = Vec3(0.35, 0.40, 0.75);
  lamp.secondary = Vec3(0.70, 0.75, 0.90);
  lamp.axis = 0;
  lamp.from = -0.4;
  lamp.to = 0.4;
  scene.primitives.push_back(make_primitive(Primitive::Kind::sphere, {-1.9, -1.8, 1.3}, {0.4, 0.4, 0.4}, lamp));
  return scene;
}

SceneSpec unit_sphere_scene() {
  SceneSpec scene;
  ColorFunction c;
  c.kind = ColorFunction::Kind::gradient;
  c.primary = Vec3(0.2, 0.4, 0.8);
  c.secondary = Vec3(0.9, 0.6, 0.3);
  c.axis = 2;
  c.from = -1.0;
  c.to = 1.0;
  scene.primitives.push_back(make_primitive(Primitive::Kind::sphere, Vec3::Zero(), Vec3::Ones(), c));
  return scene;
}

}  // namespace nimap
