#include "nimap/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace nimap {

namespace {

double orthonormality_error(const Mat3& R) {
  return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 orthonormalize(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 U = svd.matrixU();
    U.col(2) *= -1.0;
    out = U * svd.matrixV().transpose();
  }
  return out;
}

Vec3 vee(const Mat3& W) { return {W(2, 1), W(0, 2), W(1, 0)}; }

}  // namespace

Pose::Pose(const Mat3& rotation, const Vec3& translation) : R_(rotation), t_(translation) {
  if (!(orthonormality_error(R_) <= 1e-6) || R_.determinant() < 0.0 || !t_.allFinite()) {
    throw std::invalid_argument("pose rotation is not a proper rotation matrix");
  }
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  return {q.normalized().toRotationMatrix(), t};
}

Pose Pose::inverse() const {
  Mat3 Rt = R_.transpose();
  return {Rt, -(Rt * t_)};
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(R_);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

Pose compose(const Pose& a, const Pose& b) {
  Mat3 R = a.rotation() * b.rotation();
  Vec3 t = a.rotation() * b.translation() + a.translation();
  if (orthonormality_error(R) > 1e-12) R = orthonormalize(R);
  return {R, t};
}

Pose rot_x(double angle) {
  return {Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix(), Vec3::Zero()};
}
Pose rot_y(double angle) {
  return {Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix(), Vec3::Zero()};
}
Pose rot_z(double angle) {
  return {Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero()};
}
Pose translation(const Vec3& t) { return {Mat3::Identity(), t}; }

double rotation_angle(const Mat3& R) {
  double s = 0.5 * vee(R - R.transpose()).norm();
  double c = 0.5 * (R.trace() - 1.0);
  return std::atan2(s, c);
}

Mat3 skew(const Vec3& v) {
  Mat3 K;
  K << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return K;
}

Mat3 so3_exp(const Vec3& phi) {
  double theta = phi.norm();
  Mat3 K = skew(phi);
  if (theta < 1e-8) return Mat3::Identity() + K + 0.5 * K * K;
  return Eigen::AngleAxisd(theta, phi / theta).toRotationMatrix();
}

Vec3 so3_log(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  Vec3 v = q.vec();
  double sin_half = v.norm();
  if (sin_half < 1e-12) return 2.0 * v;
  double angle = 2.0 * std::atan2(sin_half, q.w());
  return angle * v / sin_half;
}

Pose se3_exp(const Vec6& xi) {
  Vec3 rho = xi.head<3>();
  Vec3 phi = xi.tail<3>();
  double theta = phi.norm();
  Mat3 K = skew(phi);
  Mat3 V;
  if (theta < 1e-5) {
    V = Mat3::Identity() + 0.5 * K + (1.0 / 6.0) * K * K;
  } else {
    double t2 = theta * theta;
    V = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * K +
        (theta - std::sin(theta)) / (t2 * theta) * K * K;
  }
  return {so3_exp(phi), V * rho};
}

Vec6 se3_log(const Pose& pose) {
  double theta = rotation_angle(pose.rotation());
  if (theta > std::numbers::pi - 1e-6) {
    throw std::domain_error("se3_log: rotation angle too close to pi");
  }
  Vec3 phi = so3_log(pose.rotation());
  theta = phi.norm();
  Mat3 K = skew(phi);
  Mat3 V_inv;
  if (theta < 1e-5) {
    V_inv = Mat3::Identity() - 0.5 * K + (1.0 / 12.0) * K * K;
  } else {
    double coef = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
    V_inv = Mat3::Identity() - 0.5 * K + coef * K * K;
  }
  Vec6 xi;
  xi.head<3>() = V_inv * pose.translation();
  xi.tail<3>() = phi;
  return xi;
}

double max_abs_diff(const Pose& a, const Pose& b) {
  double r = (a.rotation() - b.rotation()).cwiseAbs().maxCoeff();
  double t = (a.translation() - b.translation()).cwiseAbs().maxCoeff();
  return std::max(r, t);
}

void Intrinsics::validate() const {
  std::ostringstream err;
  if (!(fx > 0.0) || !(fy > 0.0)) err << "focal lengths must be positive; ";
  if (width <= 0 || height <= 0) err << "image size must be positive; ";
  if (!(cx >= 0.0 && cx < width)) err << "cx outside image; ";
  if (!(cy >= 0.0 && cy < height)) err << "cy outside image; ";
  if (!err.str().empty()) throw std::invalid_argument("invalid intrinsics: " + err.str());
}

Vec3 camera_direction(const Intrinsics& intr, double u, double v) {
  Vec3 d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  return d.normalized();
}

Ray pixel_to_ray(const Intrinsics& intr, const Pose& pose, double u, double v) {
  if (!intr.contains(u, v)) {
    std::ostringstream msg;
    msg << "pixel (" << u << ", " << v << ") outside " << intr.width << "x" << intr.height << " image";
    throw std::out_of_range(msg.str());
  }
  Ray ray;
  ray.origin = pose.translation();
  ray.direction = pose.rotate(camera_direction(intr, u, v));
  ray.pixel = {static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v))};
  return ray;
}

Vec3 back_project(const Intrinsics& intr, const Pose& pose, double u, double v, double depth) {
  return pose.apply(depth * camera_direction(intr, u, v));
}

Projection project(const Intrinsics& intr, const Pose& pose, const Vec3& world_point) {
  Vec3 pc = pose.inverse().apply(world_point);
  Projection out;
  out.depth = pc.norm();
  out.in_front = pc.z() > 0.0;
  if (out.in_front) {
    out.u = intr.fx * pc.x() / pc.z() + intr.cx;
    out.v = intr.fy * pc.y() / pc.z() + intr.cy;
  }
  return out;
}

Pose camera_from_yaw_pitch(const Vec3& eye, double yaw, double pitch) {
  Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
  Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
  Vec3 down = forward.cross(right);
  Mat3 R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = forward;
  return {R, eye};
}

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.unitOrthogonal();
  right.normalize();
  Vec3 down = forward.cross(right);
  Mat3 R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = forward;
  return {R, eye};
}

Pose snap_to_lattice(const Pose& pose, int exponent) {
  const double scale = std::ldexp(1.0, exponent);
  auto snap = [scale](double x) { return std::nearbyint(x * scale) / scale; };
  Mat3 R = pose.rotation().unaryExpr(snap);
  Vec3 t = pose.translation().unaryExpr(snap);
  return {R, t};
}

}  // namespace nimap
