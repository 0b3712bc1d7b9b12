#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <stdexcept>

namespace nimap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Rigid transform x -> R x + t. Camera poses map camera coordinates to world
/// coordinates (world <- camera).
class Pose {
 public:
  Pose() = default;
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);

  const Mat3& rotation() const { return R_; }
  const Vec3& translation() const { return t_; }

  Vec3 apply(const Vec3& p) const { return R_ * p + t_; }
  Vec3 rotate(const Vec3& v) const { return R_ * v; }

  Pose inverse() const;

  /// Unit quaternion with canonical sign (w >= 0).
  Eigen::Quaterniond quaternion() const;

 private:
  Mat3 R_ = Mat3::Identity();
  Vec3 t_ = Vec3::Zero();
};

/// Applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

Pose rot_x(double angle);
Pose rot_y(double angle);
Pose rot_z(double angle);
Pose translation(const Vec3& t);

/// Rotation angle of R in [0, pi].
double rotation_angle(const Mat3& R);

Mat3 skew(const Vec3& v);
Mat3 so3_exp(const Vec3& phi);
Vec3 so3_log(const Mat3& R);

/// Twist layout: (rho_x, rho_y, rho_z, phi_x, phi_y, phi_z).
Pose se3_exp(const Vec6& xi);
/// Throws std::domain_error when the rotation angle is within 1e-6 of pi.
Vec6 se3_log(const Pose& pose);

/// Element-wise maximum absolute difference of the 3x4 matrices.
double max_abs_diff(const Pose& a, const Pose& b);

/// Pinhole camera. Pixel (u, v) maps to image-plane coordinate (u, v); the
/// principal point sits at (cx, cy). Camera frame: +x right, +y down, +z
/// forward.
struct Intrinsics {
  double fx = 120.0;
  double fy = 120.0;
  double cx = 79.5;
  double cy = 59.5;
  int width = 160;
  int height = 120;

  void validate() const;
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u <= width - 1 && v <= height - 1;
  }
};

struct Pixel {
  int u = 0;
  int v = 0;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  Pixel pixel;

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Unit direction in the camera frame through image point (u, v).
Vec3 camera_direction(const Intrinsics& intr, double u, double v);

/// Ray through pixel (u, v) for a camera at `pose` (world <- camera).
/// Throws std::out_of_range for pixels outside the image.
Ray pixel_to_ray(const Intrinsics& intr, const Pose& pose, double u, double v);

/// Point at ray-length `depth` through pixel (u, v).
Vec3 back_project(const Intrinsics& intr, const Pose& pose, double u, double v, double depth);

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // ray length
  bool in_front = false;
};

Projection project(const Intrinsics& intr, const Pose& pose, const Vec3& world_point);

/// Camera pose looking from `eye` toward `yaw`/`pitch` in a z-up world.
Pose camera_from_yaw_pitch(const Vec3& eye, double yaw, double pitch);
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// Rounds every rotation and translation entry to a multiple of 2^-exponent.
/// Anchor-relative poses pass through this so renders depend only on the
/// relative transform, not on the rounding noise of the world frame.
Pose snap_to_lattice(const Pose& pose, int exponent = 32);

}  // namespace nimap
