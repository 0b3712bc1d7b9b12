#pragma once

// Small random neural fields and ray batches for end-to-end gradient checks.

#include "nimap/renderer.hpp"
#include "oracles.hpp"

#include <random>
#include <vector>

namespace toy {

struct Problem {
  nimap::NeuralField field;
  std::vector<nimap::TrainingRay> rays;
  nimap::TrainParams params;
};

struct GradientCheck {
  double decoder_error = 0.0;
  double feature_error = 0.0;
  std::size_t samples = 0;
  std::size_t rays = 0;
};

// A grid of extent 1 with a few random occupied leaves, random decoder
// weights scaled so occupancies are spread over (0, 1), and up to
// `max_rays` rays with at most `max_samples` samples each.
inline Problem make_problem(std::uint64_t seed, int max_rays = 4, int max_samples = 8) {
  std::mt19937_64 rng(seed);
  nimap::FieldConfig cfg;
  cfg.grid.extent = 1.0;
  cfg.grid.max_depth = 2;
  cfg.grid.active_levels = 2;
  cfg.grid.feature_dim = 4;
  cfg.grid.init_scale = 1.0;
  cfg.grid.seed = seed + 11;
  cfg.hidden_dim = 6;
  cfg.seed = seed + 17;
  Problem p{nimap::NeuralField(cfg), {}, {}};
  std::uniform_real_distribution<double> u(-0.49, 0.49);
  std::vector<nimap::Vec3> pts;
  for (int i = 0; i < 6; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  p.field.grid.insert_points(pts);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& w : p.field.occupancy.parameters()) w = 0.8 * n(rng);
  for (double& w : p.field.color.parameters()) w = 0.8 * n(rng);

  p.params.n_point = std::uniform_int_distribution<int>(1, 3)(rng);
  p.params.t_min = 0.0;
  p.params.t_max = 10.0;
  p.params.jitter = false;
  p.params.lambda_p = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  const int want = std::uniform_int_distribution<int>(1, max_rays)(rng);
  for (int attempt = 0; attempt < 500 && static_cast<int>(p.rays.size()) < want; ++attempt) {
    // Aim from outside the cube at one of the inserted points.
    const nimap::Vec3 target = pts[static_cast<std::size_t>(attempt) % pts.size()];
    const nimap::Vec3 origin = nimap::Vec3(n(rng), n(rng), n(rng)).normalized() * 1.5;
    nimap::TrainingRay tr;
    tr.ray.origin = origin;
    tr.ray.direction = (target - origin).normalized();
    const auto s = nimap::sample_ray(p.field.grid, tr.ray, p.params.n_point, nullptr, p.params.t_min, p.params.t_max);
    if (!s.observed || static_cast<int>(s.depths.size()) > max_samples) continue;
    tr.target.depth = std::uniform_real_distribution<double>(0.5, 2.5)(rng);
    if (attempt % 3 == 2) tr.target.depth = 0.0;  // invalid depth exercises the mask
    tr.target.color = nimap::Vec3(u(rng) + 0.5, u(rng) + 0.5, u(rng) + 0.5);
    p.rays.push_back(tr);
  }
  return p;
}

// Compares accumulate_gradients against central differences of
// evaluate_loss().total for every decoder weight and every touched feature.
inline GradientCheck check_gradients(Problem& p, double h = 1e-6) {
  GradientCheck out;
  out.rays = p.rays.size();
  for (const auto& r : p.rays) {
    out.samples += nimap::sample_ray(p.field.grid, r.ray, p.params.n_point, nullptr, p.params.t_min, p.params.t_max)
                       .depths.size();
  }
  nimap::DecoderGradients grads;
  p.field.grid.zero_gradients();
  nimap::accumulate_gradients(p.field, p.rays, p.params, 0, grads);
  auto loss = [&]() { return nimap::evaluate_loss(p.field, p.rays, p.params).total; };

  std::vector<double> analytic, numeric;
  auto params_occ = p.field.occupancy.parameters();
  for (std::size_t i = 0; i < params_occ.size(); ++i) {
    analytic.push_back(grads.occupancy[i]);
    numeric.push_back(oracle::central_difference(loss, params_occ[i], h));
  }
  auto params_col = p.field.color.parameters();
  for (std::size_t i = 0; i < params_col.size(); ++i) {
    analytic.push_back(grads.color[i]);
    numeric.push_back(oracle::central_difference(loss, params_col[i], h));
  }
  out.decoder_error = oracle::relative_error(analytic, numeric);

  analytic.clear();
  numeric.clear();
  auto feats = p.field.grid.features();
  auto g = p.field.grid.gradients();
  for (std::size_t i = 0; i < feats.size(); ++i) {
    analytic.push_back(g[i]);
    numeric.push_back(oracle::central_difference(loss, feats[i], h));
  }
  out.feature_error = oracle::relative_error(analytic, numeric);
  p.field.grid.zero_gradients();
  return out;
}

}  // namespace toy
