#pragma once

#include "nimap/frame.hpp"
#include "nimap/geometry.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace nimap {

struct ColorFunction {
  enum class Kind { constant, gradient, checker };
  Kind kind = Kind::constant;
  Vec3 primary = Vec3::Constant(0.5);
  Vec3 secondary = Vec3::Constant(0.5);
  int axis = 2;            // gradient axis in the primitive frame
  double from = 0.0;       // gradient range along `axis`
  double to = 1.0;
  double period = 0.5;     // checker: one full light+dark repeat, meters
  double phase = 0.125;    // checker offset, keeps faces off cell boundaries

  Vec3 eval(const Vec3& local) const;
};

struct Primitive {
  enum class Kind { sphere, box, room };
  Kind kind = Kind::sphere;
  Pose pose;               // world <- primitive
  Vec3 size = Vec3::Ones();  // box/room: full side lengths; sphere: size.x() = radius
  ColorFunction color;

  double signed_distance_local(const Vec3& local) const;
};

std::string to_string(Primitive::Kind kind);

struct SceneSpec {
  std::vector<Primitive> primitives;
  Vec3 background = Vec3::Zero();
  double depth_noise = 0.0;  // std-dev of additive Gaussian depth noise, meters

  void validate() const;
};

struct SdfSample {
  double distance = 0.0;
  Vec3 color = Vec3::Zero();
  int primitive = -1;
};

/// Union (min) of primitive SDFs with the colour of the closest primitive.
SdfSample sdf(const SceneSpec& scene, const Vec3& p);

struct SurfaceHit {
  double depth = 0.0;  // ray length
  Vec3 color = Vec3::Zero();
};

/// Sphere tracing until |sdf| < 1e-10 m; nullopt on a miss or beyond t_max.
std::optional<SurfaceHit> raycast(const SceneSpec& scene, const Ray& ray, double t_max);

struct GroundTruthFrame {
  ColorImage color;
  DepthImage depth;  // ray-length depth, 0 where nothing was hit
};

/// Per-pixel raycast. `noise` (optional) drives the configured depth noise.
GroundTruthFrame render_gt_frame(const SceneSpec& scene, const Pose& pose, const Intrinsics& intr,
                                 double t_max = 50.0, std::mt19937_64* noise = nullptr);

/// 6 x 6 x 3 m checker-walled room with four interior objects.
SceneSpec default_room_scene();
/// A single unit sphere at the origin.
SceneSpec unit_sphere_scene();

}  // namespace nimap
