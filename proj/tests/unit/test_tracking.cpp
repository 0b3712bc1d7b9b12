#include "nimap/tracking_sim.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nimap;

namespace {

TrajectoryConfig square(int laps = 1) {
  TrajectoryConfig c;
  c.waypoints = {{Vec3(0, 0, 1), 0.0, 0.0},
                 {Vec3(2, 0, 1), M_PI / 2, 0.0},
                 {Vec3(2, 2, 1), M_PI, 0.0},
                 {Vec3(0, 2, 1), -M_PI / 2, 0.0}};
  c.laps = laps;
  c.drift.sigma_t = 0.0;
  return c;
}

Pose random_pose(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Vec6 xi;
  for (int i = 0; i < 6; ++i) xi[i] = n(rng);
  return se3_exp(xi);
}

}  // namespace

TEST(Trajectory, StartsAtFirstWaypointAndClosesLap) {
  const TrajectoryConfig c = square();
  const auto poses = interpolate_trajectory(c);
  ASSERT_GT(poses.size(), 10u);
  const Pose start = camera_from_yaw_pitch(c.waypoints[0].position, 0.0, 0.0);
  EXPECT_LT(max_abs_diff(poses.front(), start), 1e-12);
  EXPECT_LT((poses.back().translation() - start.translation()).norm(), c.speed / c.rate_hz + 1e-9);
}

TEST(Trajectory, RespectsSpeedLimits) {
  const TrajectoryConfig c = square(2);
  const auto poses = interpolate_trajectory(c);
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const Pose rel = poses[i - 1].inverse() * poses[i];
    EXPECT_LE(rel.translation().norm(), c.speed / c.rate_hz + 1e-9);
    EXPECT_LE(rotation_angle(rel.rotation()), c.angular_speed / c.rate_hz + 1e-9);
  }
}

TEST(Trajectory, DurationMatchesPathLength) {
  const TrajectoryConfig c = square();
  // Four 2 m edges at 0.3 m/s; each quarter turn (1.57 rad at 0.6 rad/s) is
  // shorter than its translation so it never sets the pace.
  const double seconds = 8.0 / c.speed;
  EXPECT_EQ(interpolate_trajectory(c).size(), static_cast<std::size_t>(std::floor(seconds * c.rate_hz + 1e-9)) + 1);
  const TrajectoryConfig two = square(2);
  EXPECT_EQ(interpolate_trajectory(two).size(), static_cast<std::size_t>(std::floor(2 * seconds * c.rate_hz + 1e-9)) + 1);
}

TEST(Trajectory, YawTakesShortWay) {
  TrajectoryConfig c;
  c.waypoints = {{Vec3::Zero(), 3.0, 0.0}, {Vec3::Zero(), -3.0, 0.0}};
  c.closed = false;
  const auto poses = interpolate_trajectory(c);
  // The short way is 2 pi - 6 = 0.283 rad, i.e. 0.47 s at 0.6 rad/s, so the
  // last sample lands at t = 0.4 s.
  ASSERT_EQ(poses.size(), 5u);
  const Pose rel = poses.front().inverse() * poses.back();
  EXPECT_NEAR(rotation_angle(rel.rotation()), 0.4 * c.angular_speed, 1e-9);
}

TEST(Trajectory, InvalidConfigThrows) {
  TrajectoryConfig c = square();
  c.waypoints.resize(1);
  EXPECT_THROW(interpolate_trajectory(c), std::invalid_argument);
  c = square();
  c.speed = 0.0;
  EXPECT_THROW(interpolate_trajectory(c), std::invalid_argument);
  c = square();
  c.drift.sigma_r = -1.0;
  EXPECT_THROW(TrajectoryModel{c}, std::invalid_argument);
}

TEST(Odometry, NoDriftTracksGroundTruth) {
  TrajectoryModel m(square());
  while (!m.exhausted()) {
    const FrameSample s = m.next_frame();
    EXPECT_LT(max_abs_diff(s.gt, s.estimate), 1e-9);
  }
  EXPECT_THROW(m.next_frame(), std::out_of_range);
}

TEST(Odometry, BiasChainsInBodyFrame) {
  TrajectoryConfig c = square();
  c.drift.bias << 0.001, 0, 0, 0, 0, 0.002;
  TrajectoryModel m(c);
  Pose expect = m.next_frame().gt;
  Pose prev_gt = expect;
  for (int i = 0; i < 30; ++i) {
    const FrameSample s = m.next_frame();
    expect = expect * (prev_gt.inverse() * s.gt) * se3_exp(c.drift.bias);
    prev_gt = s.gt;
    EXPECT_LT(max_abs_diff(s.estimate, expect), 1e-12);
  }
  EXPECT_GT((expect.translation() - prev_gt.translation()).norm(), 0.01);
}

TEST(Odometry, SeededNoiseIsReproducible) {
  TrajectoryConfig c = square();
  c.drift.sigma_t = 0.01;
  c.drift.sigma_r = 0.01;
  TrajectoryModel a(c), b(c);
  while (!a.exhausted()) EXPECT_EQ(max_abs_diff(a.next_frame().estimate, b.next_frame().estimate), 0.0);
  TrajectoryModel f(c);
  c.seed += 1;
  TrajectoryModel d(c);
  double diff = 0.0;
  while (!d.exhausted()) diff = std::max(diff, max_abs_diff(d.next_frame().estimate, f.next_frame().estimate));
  EXPECT_GT(diff, 0.0);
}

TEST(Odometry, CorrectionReanchorsChain) {
  TrajectoryConfig c = square();
  c.drift.bias << 0.01, 0, 0, 0, 0, 0;
  TrajectoryModel m(c);
  for (int i = 0; i < 10; ++i) m.next_frame();
  const Pose gt9 = m.ground_truth()[9];
  m.correct_estimate(gt9);
  const FrameSample s = m.next_frame();
  EXPECT_LT(max_abs_diff(s.estimate, gt9 * (gt9.inverse() * s.gt) * se3_exp(c.drift.bias)), 1e-12);
}

TEST(Keyframes, Thresholds) {
  const KeyframeThresholds th;
  EXPECT_TRUE(is_keyframe(std::nullopt, Pose::identity(), th));
  const Pose base = camera_from_yaw_pitch(Vec3(1, 2, 3), 0.3, 0.1);
  EXPECT_FALSE(is_keyframe(base, base * Pose(Mat3::Identity(), Vec3(0.19, 0, 0)), th));
  EXPECT_TRUE(is_keyframe(base, base * Pose(Mat3::Identity(), Vec3(0.21, 0, 0)), th));
  const Mat3 small = Eigen::AngleAxisd(9.0 * M_PI / 180, Vec3::UnitY()).toRotationMatrix();
  const Mat3 large = Eigen::AngleAxisd(11.0 * M_PI / 180, Vec3::UnitY()).toRotationMatrix();
  EXPECT_FALSE(is_keyframe(base, base * Pose(small, Vec3::Zero()), th));
  EXPECT_TRUE(is_keyframe(base, base * Pose(large, Vec3::Zero()), th));
}

TEST(Loops, OldestMatchOutsideWindow) {
  LoopParams p;
  p.window = 3;
  std::vector<Pose> history;
  for (int i = 0; i < 8; ++i) history.push_back(Pose(Mat3::Identity(), Vec3(0.1 * i, 0, 0)));
  // Matches indices 0..5 within 0.5 m, but 5..7 sit in the excluded window.
  EXPECT_EQ(detect_loop(Pose::identity(), history, p), std::optional<int>(0));
  EXPECT_EQ(detect_loop(Pose(Mat3::Identity(), Vec3(0.9, 0, 0)), history, p), std::optional<int>(4));
  EXPECT_EQ(detect_loop(Pose(Mat3::Identity(), Vec3(5, 0, 0)), history, p), std::nullopt);
  const Mat3 turned = Eigen::AngleAxisd(0.5, Vec3::UnitZ()).toRotationMatrix();
  EXPECT_EQ(detect_loop(Pose(turned, Vec3::Zero()), history, p), std::nullopt);
  const std::vector<Pose> short_history(history.begin(), history.begin() + 3);
  EXPECT_EQ(detect_loop(Pose::identity(), short_history, p), std::nullopt);
}

TEST(PoseGraph, CostOfTranslationOffset) {
  PoseGraph g;
  g.add_node(0, Pose::identity());
  g.add_node(1, Pose(Mat3::Identity(), Vec3(1.1, 0, 0)));
  g.add_edge({0, 1, Pose(Mat3::Identity(), Vec3(1, 0, 0)), 2.0, EdgeKind::odometry});
  EXPECT_NEAR(g.cost(), 2.0 * 0.01, 1e-12);
  EXPECT_EQ(g.gauge(), 0);
  EXPECT_TRUE(g.connected());
}

TEST(PoseGraph, RejectsBadEdgesAndGraphs) {
  PoseGraph g;
  EXPECT_THROW(optimize_pose_graph(g), std::invalid_argument);
  g.add_node(0, Pose::identity());
  g.add_node(1, Pose::identity());
  EXPECT_FALSE(g.connected());
  EXPECT_THROW(optimize_pose_graph(g), std::invalid_argument);
  EXPECT_THROW(g.add_edge({0, 7, Pose::identity(), 1.0, EdgeKind::odometry}), std::invalid_argument);
  EXPECT_THROW(g.add_edge({0, 1, Pose::identity(), -1.0, EdgeKind::odometry}), std::invalid_argument);
  EXPECT_THROW(g.add_node(0, Pose::identity()), std::invalid_argument);
}

TEST(PoseGraph, ConsistentGraphConvergesToTruth) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Pose> truth{Pose::identity()};
    for (int i = 1; i < 12; ++i) truth.push_back(truth.back() * random_pose(rng, 0.3));
    PoseGraph g;
    for (int i = 0; i < 12; ++i) g.add_node(i, i == 0 ? truth[0] : truth[static_cast<std::size_t>(i)] * random_pose(rng, 0.05));
    for (int i = 0; i + 1 < 12; ++i) {
      g.add_edge({i, i + 1, truth[static_cast<std::size_t>(i)].inverse() * truth[static_cast<std::size_t>(i + 1)], 1.0,
                  EdgeKind::odometry});
    }
    g.add_edge({0, 11, truth[0].inverse() * truth[11], 10.0, EdgeKind::loop});
    const PoseGraphResult r = optimize_pose_graph(g);
    EXPECT_LT(r.final_residual, 1e-8);
    EXPECT_LE(r.final_residual, r.initial_residual);
    for (int i = 0; i < 12; ++i) EXPECT_LT(max_abs_diff(g.pose(i), truth[static_cast<std::size_t>(i)]), 1e-8);
  }
}

TEST(PoseGraph, LoopEdgeRemovesSquareDrift) {
  TrajectoryConfig c = square();
  c.drift.bias << 0.002, 0, 0, 0, 0, 0.003;
  TrajectoryModel m(c);
  PoseGraph g;
  std::vector<FrameSample> samples;
  while (!m.exhausted()) samples.push_back(m.next_frame());
  for (std::size_t i = 0; i < samples.size(); i += 5) {
    const int id = static_cast<int>(i);
    g.add_node(id, samples[i].estimate);
    if (i > 0) {
      const int prev = id - 5;
      g.add_edge({prev, id, samples[i - 5].estimate.inverse() * samples[i].estimate, 1.0, EdgeKind::odometry});
    }
  }
  const int last = static_cast<int>(((samples.size() - 1) / 5) * 5);
  const double drift_before = (g.pose(last).translation() - samples[static_cast<std::size_t>(last)].gt.translation()).norm();
  g.add_edge({0, last, samples[0].gt.inverse() * samples[static_cast<std::size_t>(last)].gt, 10.0, EdgeKind::loop});
  const double cost_before = g.cost();
  const PoseGraphResult r = optimize_pose_graph(g);
  EXPECT_LT(g.cost(), 0.1 * cost_before);
  EXPECT_NEAR(r.initial_residual, std::sqrt(cost_before), 1e-9);
  EXPECT_LT(max_abs_diff(g.pose(0), samples[0].gt), 1e-15);
  const double drift_after = (g.pose(last).translation() - samples[static_cast<std::size_t>(last)].gt.translation()).norm();
  EXPECT_LT(drift_after, 0.2 * drift_before);
}
