#pragma once

#include "nimap/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace nimap {

/// Row-major image; pixel (u, v) is column u of row v.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, const T& fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }
  const T& at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& other) const { return width == other.width && height == other.height; }
};

using ColorImage = Image<Vec3>;
using DepthImage = Image<double>;  // ray-length depth in meters, 0 = invalid
using ScalarImage = Image<double>;
using MaskImage = Image<unsigned char>;

/// One RGB-D keyframe with its current (estimated) world pose.
struct Keyframe {
  int id = 0;
  int frame_index = 0;
  double timestamp = 0.0;
  Intrinsics intrinsics;
  Pose pose;     // world <- camera, current estimate
  Pose gt_pose;  // simulator ground truth, used only for evaluation
  ColorImage color;
  DepthImage depth;

  /// World-frame surface points of every valid depth pixel under `camera_pose`.
  std::vector<Vec3> back_projected_points(const Pose& camera_pose, int stride = 1) const;
};

}  // namespace nimap
