#include "nimap/scene_oracle.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nimap;

namespace {

Primitive make(Primitive::Kind kind, const Pose& pose, const Vec3& size) {
  Primitive p;
  p.kind = kind;
  p.pose = pose;
  p.size = size;
  return p;
}

SceneSpec empty_room() {
  SceneSpec s;
  s.primitives.push_back(make(Primitive::Kind::room, Pose(Mat3::Identity(), Vec3(0, 0, 1.5)), Vec3(6, 6, 3)));
  return s;
}

}  // namespace

TEST(Sdf, SphereBoxRoomValues) {
  const Primitive sphere = make(Primitive::Kind::sphere, Pose::identity(), Vec3(2, 2, 2));
  EXPECT_DOUBLE_EQ(sphere.signed_distance_local(Vec3(3, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(sphere.signed_distance_local(Vec3::Zero()), -2.0);
  const Primitive box = make(Primitive::Kind::box, Pose::identity(), Vec3(2, 4, 6));
  EXPECT_DOUBLE_EQ(box.signed_distance_local(Vec3(2, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(box.signed_distance_local(Vec3(0, 0, 0)), -1.0);
  EXPECT_NEAR(box.signed_distance_local(Vec3(2, 3, 0)), std::sqrt(2.0), 1e-15);
  const Primitive room = make(Primitive::Kind::room, Pose::identity(), Vec3(6, 6, 3));
  EXPECT_DOUBLE_EQ(room.signed_distance_local(Vec3::Zero()), 1.5);
  EXPECT_DOUBLE_EQ(room.signed_distance_local(Vec3(2.5, 0, 0)), 0.5);
  EXPECT_LT(room.signed_distance_local(Vec3(4, 0, 0)), 0.0);
}

TEST(Sdf, UnionTakesClosestPrimitive) {
  SceneSpec s;
  s.primitives.push_back(make(Primitive::Kind::sphere, Pose::identity(), Vec3::Ones()));
  s.primitives.push_back(make(Primitive::Kind::sphere, Pose(Mat3::Identity(), Vec3(5, 0, 0)), Vec3::Ones()));
  s.primitives[1].color.primary = Vec3(1, 0, 0);
  const SdfSample a = sdf(s, Vec3(3.5, 0, 0));
  EXPECT_EQ(a.primitive, 1);
  EXPECT_DOUBLE_EQ(a.distance, 0.5);
  EXPECT_EQ(a.color, Vec3(1, 0, 0));
  EXPECT_EQ(sdf(s, Vec3(1.5, 0, 0)).primitive, 0);
}

TEST(Sdf, TransformedPrimitive) {
  const Mat3 R = Eigen::AngleAxisd(M_PI / 4, Vec3::UnitZ()).toRotationMatrix();
  SceneSpec s;
  s.primitives.push_back(make(Primitive::Kind::box, Pose(R, Vec3(1, 1, 0)), Vec3(2, 2, 2)));
  // Corner of the rotated box points along world +x at distance sqrt(2).
  EXPECT_NEAR(sdf(s, Vec3(1 + std::sqrt(2.0) + 0.5, 1, 0)).distance, 0.5, 1e-12);
}

TEST(Color, CheckerGradientConstant) {
  ColorFunction c;
  c.kind = ColorFunction::Kind::checker;
  c.primary = Vec3(1, 1, 1);
  c.secondary = Vec3(0, 0, 0);
  c.period = 1.0;
  c.phase = 0.0;
  EXPECT_EQ(c.eval(Vec3(0.25, 0.25, 0.25)), c.primary);
  EXPECT_EQ(c.eval(Vec3(0.75, 0.25, 0.25)), c.secondary);
  EXPECT_EQ(c.eval(Vec3(0.75, 0.75, 0.25)), c.primary);
  EXPECT_EQ(c.eval(Vec3(-0.25, 0.25, 0.25)), c.secondary);
  c.kind = ColorFunction::Kind::gradient;
  c.axis = 1;
  c.from = 0.0;
  c.to = 2.0;
  EXPECT_EQ(c.eval(Vec3(9, -1, 9)), c.primary);
  EXPECT_EQ(c.eval(Vec3(9, 3, 9)), c.secondary);
  EXPECT_EQ(c.eval(Vec3(9, 1, 9)), Vec3(0.5, 0.5, 0.5));
  c.kind = ColorFunction::Kind::constant;
  EXPECT_EQ(c.eval(Vec3(1, 2, 3)), c.primary);
}

TEST(Raycast, SphereMatchesAnalyticIntersection) {
  const SceneSpec s = unit_sphere_scene();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  int hits = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 origin = Vec3(n(rng), n(rng), n(rng)).normalized() * 3.0;
    const Vec3 dir = (Vec3(0.6 * n(rng), 0.6 * n(rng), 0.6 * n(rng)) - origin).normalized();
    const double want = oracle::ray_sphere(origin, dir, Vec3::Zero(), 1.0);
    const auto got = raycast(s, Ray{origin, dir, {}}, 50.0);
    ASSERT_EQ(got.has_value(), want > 0.0) << i;
    if (!got) continue;
    ++hits;
    EXPECT_NEAR(got->depth, want, 1e-8);
  }
  EXPECT_GT(hits, 1000);
}

TEST(Raycast, RoomWallsMatchBoxExit) {
  const SceneSpec s = empty_room();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 origin(2.0 * u(rng), 2.0 * u(rng), 1.5 + u(rng));
    const Vec3 dir = Vec3(u(rng), u(rng), u(rng)).normalized();
    const double want = oracle::ray_box_exit(origin, dir, Vec3(-3, -3, 0), Vec3(3, 3, 3));
    const auto got = raycast(s, Ray{origin, dir, {}}, 50.0);
    ASSERT_TRUE(got.has_value());
    EXPECT_NEAR(got->depth, want, 1e-7);
  }
}

TEST(Raycast, MissesAndLimits) {
  const SceneSpec s = unit_sphere_scene();
  EXPECT_FALSE(raycast(s, Ray{Vec3(0, -3, 0), Vec3(0, -1, 0), {}}, 50.0));
  EXPECT_FALSE(raycast(s, Ray{Vec3(0, -3, 0), Vec3(0, 1, 0), {}}, 1.5));
  EXPECT_FALSE(raycast(s, Ray{Vec3::Zero(), Vec3(0, 1, 0), {}}, 10.0));
  EXPECT_THROW(raycast(s, Ray{Vec3(0, -3, 0), Vec3(0, 1, 0), {}}, 0.0), std::invalid_argument);
}

TEST(GroundTruth, FrameDepthIsRayLength) {
  const SceneSpec s = unit_sphere_scene();
  const Intrinsics K{40.0, 40.0, 19.5, 14.5, 40, 30};
  const Pose pose = look_at(Vec3(0.2, -3, 0.4), Vec3::Zero());
  const GroundTruthFrame f = render_gt_frame(s, pose, K);
  int valid = 0;
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const Ray r = pixel_to_ray(K, pose, u, v);
      const double want = oracle::ray_sphere(r.origin, r.direction, Vec3::Zero(), 1.0);
      if (want > 0.0) {
        ++valid;
        EXPECT_NEAR(f.depth.at(u, v), want, 1e-8);
        EXPECT_NEAR(back_project(K, pose, u, v, f.depth.at(u, v)).norm(), 1.0, 1e-8);
      } else {
        EXPECT_EQ(f.depth.at(u, v), 0.0);
        EXPECT_EQ(f.color.at(u, v), s.background);
      }
    }
  }
  EXPECT_GT(valid, 100);
}

TEST(GroundTruth, DepthNoiseIsSeeded) {
  SceneSpec s = unit_sphere_scene();
  s.depth_noise = 0.01;
  const Intrinsics K{20.0, 20.0, 9.5, 9.5, 20, 20};
  const Pose pose = look_at(Vec3(0, -3, 0), Vec3::Zero());
  const GroundTruthFrame clean = render_gt_frame(s, pose, K);
  std::mt19937_64 a(5), b(5);
  const GroundTruthFrame n1 = render_gt_frame(s, pose, K, 50.0, &a);
  const GroundTruthFrame n2 = render_gt_frame(s, pose, K, 50.0, &b);
  EXPECT_EQ(n1.depth.data, n2.depth.data);
  EXPECT_NE(n1.depth.data, clean.depth.data);
  for (std::size_t i = 0; i < clean.depth.size(); ++i) {
    EXPECT_EQ(clean.depth.data[i] > 0.0, n1.depth.data[i] > 0.0);
    EXPECT_LT(std::abs(clean.depth.data[i] - n1.depth.data[i]), 0.1);
  }
}

TEST(Scenes, DefaultsAreValid) {
  const SceneSpec room = default_room_scene();
  EXPECT_NO_THROW(room.validate());
  EXPECT_EQ(room.primitives.front().kind, Primitive::Kind::room);
  // The room centre is free space with every wall in range.
  EXPECT_GT(sdf(room, Vec3(0, 0, 1.5)).distance, 0.5);
  EXPECT_NO_THROW(unit_sphere_scene().validate());
  EXPECT_EQ(to_string(Primitive::Kind::box), "box");
}

TEST(Scenes, ValidationRejectsBadSpecs) {
  SceneSpec s;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = unit_sphere_scene();
  s.primitives[0].size = Vec3(-1, 1, 1);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = unit_sphere_scene();
  s.depth_noise = -0.1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = unit_sphere_scene();
  s.primitives[0].color.kind = ColorFunction::Kind::checker;
  s.primitives[0].color.period = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}
