#include "nimap/frame.hpp"

namespace nimap {

std::vector<Vec3> Keyframe::back_projected_points(const Pose& camera_pose, int stride) const {
  if (stride < 1) throw std::invalid_argument("back_projected_points: stride must be >= 1");
  std::vector<Vec3> points;
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const double d = depth.at(u, v);
      if (d > 0.0 && std::isfinite(d)) points.push_back(back_project(intrinsics, camera_pose, u, v, d));
    }
  }
  return points;
}

}  // namespace nimap
