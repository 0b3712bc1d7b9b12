#include "nimap/tracking_sim.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <stdexcept>

namespace nimap {

namespace {

double wrap_angle(double a) { return std::remainder(a, 2.0 * M_PI); }

Vec6 edge_residual(const Pose& Ti, const Pose& Tj, const Pose& Z) {
  return se3_log(Z.inverse() * Ti.inverse() * Tj);
}

}  // namespace

void TrajectoryConfig::validate() const {
  if (waypoints.size() < 2) throw std::invalid_argument("trajectory needs at least 2 waypoints");
  if (laps < 1) throw std::invalid_argument("trajectory laps must be >= 1");
  if (!(speed > 0.0) || !(angular_speed > 0.0) || !(rate_hz > 0.0)) {
    throw std::invalid_argument("trajectory speed, angular_speed and rate_hz must be positive");
  }
  if (!(drift.sigma_t >= 0.0) || !(drift.sigma_r >= 0.0) || !drift.bias.allFinite()) {
    throw std::invalid_argument("drift parameters must be finite and non-negative");
  }
}

std::vector<Pose> interpolate_trajectory(const TrajectoryConfig& config) {
  config.validate();
  std::vector<Waypoint> path;
  for (int lap = 0; lap < config.laps; ++lap) {
    for (std::size_t i = 0; i < config.waypoints.size(); ++i) {
      if (lap > 0 && i == 0) continue;  // lap start coincides with the previous lap end
      path.push_back(config.waypoints[i]);
    }
    if (config.closed) path.push_back(config.waypoints.front());
  }
  struct Segment {
    Waypoint a, b;
    double duration;
    double dyaw;
  };
  std::vector<Segment> segments;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Waypoint& a = path[i];
    const Waypoint& b = path[i + 1];
    const double dyaw = wrap_angle(b.yaw - a.yaw);
    const double dpitch = b.pitch - a.pitch;
    const double dist = (b.position - a.position).norm();
    const double turn = std::max(std::abs(dyaw), std::abs(dpitch));
    const double duration = std::max(dist / config.speed, turn / config.angular_speed);
    if (duration <= 0.0) continue;
    segments.push_back({a, b, duration, dyaw});
    total += duration;
  }
  std::vector<Pose> poses;
  const double dt = 1.0 / config.rate_hz;
  const auto frames = static_cast<std::size_t>(std::floor(total / dt + 1e-9)) + 1;
  std::size_t seg = 0;
  double seg_start = 0.0;
  for (std::size_t k = 0; k < frames; ++k) {
    const double t = static_cast<double>(k) * dt;
    while (seg + 1 < segments.size() && t > seg_start + segments[seg].duration) {
      seg_start += segments[seg].duration;
      ++seg;
    }
    if (segments.empty()) {
      const Waypoint& w = path.front();
      poses.push_back(camera_from_yaw_pitch(w.position, w.yaw, w.pitch));
      continue;
    }
    const Segment& s = segments[seg];
    const double f = std::clamp((t - seg_start) / s.duration, 0.0, 1.0);
    const Vec3 p = (1.0 - f) * s.a.position + f * s.b.position;
    const double yaw = s.a.yaw + f * s.dyaw;
    const double pitch = (1.0 - f) * s.a.pitch + f * s.b.pitch;
    poses.push_back(camera_from_yaw_pitch(p, yaw, pitch));
  }
  return poses;
}

TrajectoryModel::TrajectoryModel(const TrajectoryConfig& config)
    : config_(config), gt_(interpolate_trajectory(config)), rng_(config.seed) {}

FrameSample TrajectoryModel::next_frame() {
  if (exhausted()) throw std::out_of_range("trajectory exhausted");
  FrameSample s;
  s.index = static_cast<int>(next_);
  s.timestamp = static_cast<double>(next_) / config_.rate_hz;
  s.gt = gt_[next_];
  if (next_ == 0) {
    estimate_ = gt_[0];
  } else {
    const Pose delta = gt_[next_ - 1].inverse() * gt_[next_];
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec6 xi = config_.drift.bias;
    for (int i = 0; i < 3; ++i) xi[i] += config_.drift.sigma_t * gauss(rng_);
    for (int i = 3; i < 6; ++i) xi[i] += config_.drift.sigma_r * gauss(rng_);
    estimate_ = estimate_ * delta * se3_exp(xi);
  }
  s.estimate = estimate_;
  ++next_;
  return s;
}

void TrajectoryModel::correct_estimate(const Pose& corrected) { estimate_ = corrected; }

bool is_keyframe(const std::optional<Pose>& previous_keyframe, const Pose& current, const KeyframeThresholds& th) {
  if (!previous_keyframe) return true;
  const Pose rel = previous_keyframe->inverse() * current;
  return rel.translation().norm() > th.translation || rotation_angle(rel.rotation()) > th.rotation;
}

std::optional<int> detect_loop(const Pose& current, std::span<const Pose> history, const LoopParams& params) {
  const auto limit = static_cast<std::ptrdiff_t>(history.size()) - params.window;
  for (std::ptrdiff_t i = 0; i < limit; ++i) {
    const Pose rel = history[static_cast<std::size_t>(i)].inverse() * current;
    if (rel.translation().norm() <= params.radius && rotation_angle(rel.rotation()) <= params.angle) {
      return static_cast<int>(i);
    }
  }
  return std::nullopt;
}

void PoseGraph::add_node(int id, const Pose& estimate) {
  if (!nodes_.emplace(id, estimate).second) throw std::invalid_argument("pose graph node already exists");
}

void PoseGraph::add_edge(const PoseGraphEdge& edge) {
  if (!contains(edge.from) || !contains(edge.to)) throw std::invalid_argument("pose graph edge references unknown node");
  if (edge.from == edge.to) throw std::invalid_argument("pose graph edge must join two distinct nodes");
  if (!(edge.weight > 0.0)) throw std::invalid_argument("pose graph edge weight must be positive");
  edges_.push_back(edge);
}

void PoseGraph::set_pose(int id, const Pose& pose) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("pose graph node not found");
  it->second = pose;
}

const Pose& PoseGraph::pose(int id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::out_of_range("pose graph node not found");
  return it->second;
}

int PoseGraph::gauge() const {
  if (nodes_.empty()) throw std::logic_error("empty pose graph has no gauge");
  return nodes_.begin()->first;
}

bool PoseGraph::connected() const {
  if (nodes_.empty()) return false;
  std::map<int, std::vector<int>> adj;
  for (const auto& e : edges_) {
    adj[e.from].push_back(e.to);
    adj[e.to].push_back(e.from);
  }
  std::set<int> seen{gauge()};
  std::queue<int> q;
  q.push(gauge());
  while (!q.empty()) {
    const int n = q.front();
    q.pop();
    for (int m : adj[n]) {
      if (seen.insert(m).second) q.push(m);
    }
  }
  return seen.size() == nodes_.size();
}

double PoseGraph::cost() const {
  double c = 0.0;
  for (const auto& e : edges_) c += e.weight * edge_residual(pose(e.from), pose(e.to), e.measurement).squaredNorm();
  return c;
}

PoseGraphResult optimize_pose_graph(PoseGraph& graph, const PoseGraphOptions& options) {
  if (graph.nodes().empty()) throw std::invalid_argument("pose graph is empty");
  if (!graph.connected()) throw std::invalid_argument("pose graph is disconnected");

  std::map<int, int> column;  // node id -> variable block, gauge excluded
  const int gauge = graph.gauge();
  for (const auto& [id, pose] : graph.nodes()) {
    if (id != gauge) column.emplace(id, static_cast<int>(column.size()));
  }
  const int dim = 6 * static_cast<int>(column.size());
  PoseGraphResult result;
  double cost = graph.cost();
  result.initial_residual = std::sqrt(cost);
  result.final_residual = result.initial_residual;
  if (dim == 0 || graph.edges().empty()) return result;

  constexpr double h = 1e-6;
  double lambda = options.initial_damping;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& e : graph.edges()) {
      const Pose& Ti = graph.pose(e.from);
      const Pose& Tj = graph.pose(e.to);
      const Vec6 r = edge_residual(Ti, Tj, e.measurement);
      Eigen::Matrix<double, 6, 6> Ji, Jj;
      for (int k = 0; k < 6; ++k) {
        Vec6 d = Vec6::Zero();
        d[k] = h;
        Ji.col(k) = (edge_residual(Ti * se3_exp(d), Tj, e.measurement) -
                     edge_residual(Ti * se3_exp(-d), Tj, e.measurement)) / (2 * h);
        Jj.col(k) = (edge_residual(Ti, Tj * se3_exp(d), e.measurement) -
                     edge_residual(Ti, Tj * se3_exp(-d), e.measurement)) / (2 * h);
      }
      const int bi = e.from == gauge ? -1 : column.at(e.from);
      const int bj = e.to == gauge ? -1 : column.at(e.to);
      const std::array<std::pair<int, const Eigen::Matrix<double, 6, 6>*>, 2> blocks{{{bi, &Ji}, {bj, &Jj}}};
      for (const auto& [ba, Ja] : blocks) {
        if (ba < 0) continue;
        g.segment<6>(6 * ba) += e.weight * Ja->transpose() * r;
        for (const auto& [bb, Jb] : blocks) {
          if (bb < 0) continue;
          const Eigen::Matrix<double, 6, 6> H = e.weight * Ja->transpose() * (*Jb);
          for (int r0 = 0; r0 < 6; ++r0)
            for (int c0 = 0; c0 < 6; ++c0) triplets.emplace_back(6 * ba + r0, 6 * bb + c0, H(r0, c0));
        }
      }
    }
    Eigen::SparseMatrix<double> H(dim, dim);
    H.setFromTriplets(triplets.begin(), triplets.end());

    bool accepted = false;
    bool factorized = false;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      Eigen::SparseMatrix<double> A = H;
      for (int k = 0; k < dim; ++k) A.coeffRef(k, k) += lambda * (1.0 + H.coeff(k, k));
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        ++result.rejected_steps;
        continue;
      }
      factorized = true;
      const Eigen::VectorXd delta = solver.solve(-g);
      std::map<int, Pose> backup = graph.nodes();
      for (const auto& [id, b] : column) graph.set_pose(id, graph.pose(id) * se3_exp(delta.segment<6>(6 * b)));
      const double new_cost = graph.cost();
      if (std::isfinite(new_cost) && new_cost <= cost) {
        accepted = true;
        lambda = std::max(lambda * 0.1, 1e-12);
        const double decrease = std::sqrt(cost) - std::sqrt(new_cost);
        cost = new_cost;
        result.iterations = iter + 1;
        result.final_residual = std::sqrt(cost);
        if (decrease < options.min_decrease) return result;
      } else {
        for (const auto& [id, p] : backup) graph.set_pose(id, p);
        lambda *= 10.0;
        ++result.rejected_steps;
      }
    }
    if (!factorized) throw std::runtime_error("pose graph normal equations are singular");
    if (!accepted) break;
  }
  return result;
}

}  // namespace nimap
