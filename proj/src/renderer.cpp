#include "nimap/renderer.hpp"

#include "nimap/binary_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace nimap {

namespace {

constexpr std::size_t kRaysPerBlock = 64;

std::vector<int> decoder_sizes(const FieldConfig& cfg, int out) {
  return {cfg.grid.feature_dim, cfg.hidden_dim, out};
}

std::mt19937_64 block_rng(std::uint64_t seed, std::size_t block) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
  return std::mt19937_64(seq);
}

/// Per-ray forward state kept for the reverse pass.
struct RayForward {
  Eigen::MatrixXd features;
  std::vector<InterpolationRecord> records;
  MlpDecoder::Activations occ_act;
  MlpDecoder::Activations color_act;
  std::vector<double> occupancy;
  std::vector<Vec3> colors;
  CompositeResult result;
};

void forward_ray(const NeuralField& field, const Ray& ray, const RaySamples& samples, RayForward& fw,
                 bool keep_activations) {
  const auto n = static_cast<Eigen::Index>(samples.depths.size());
  const int F = field.grid.feature_dim();
  fw.features.resize(F, n);
  fw.records.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    Vec3 x = ray.at(samples.depths[si]);
    field.grid.interpolate_in_leaf(samples.leaves[si], x,
                                   std::span<double>(fw.features.col(i).data(), static_cast<std::size_t>(F)),
                                   fw.records[si]);
  }
  Eigen::MatrixXd logits = field.occupancy.forward(fw.features, keep_activations ? &fw.occ_act : nullptr);
  Eigen::MatrixXd colors = field.color.forward(fw.features, keep_activations ? &fw.color_act : nullptr);
  fw.occupancy.resize(static_cast<std::size_t>(n));
  fw.colors.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    fw.occupancy[static_cast<std::size_t>(i)] = sigmoid(logits(0, i));
    fw.colors[static_cast<std::size_t>(i)] = colors.col(i);
  }
  fw.result = composite(samples.depths, fw.occupancy, fw.colors);
}

struct BlockOutput {
  DecoderGradients decoder;
  std::vector<std::uint32_t> slots;
  std::vector<double> slot_grads;
};

/// Reverse pass for one ray; corner gradients are summed per voxel before
/// being appended to the block's slot list.
void backward_ray(const NeuralField& field, const RaySamples& samples, const RayForward& fw, double d_depth,
                  const Vec3& d_color, BlockOutput& out) {
  const std::size_t n = samples.depths.size();
  std::vector<double> d_occ(n);
  std::vector<Vec3> d_col(n);
  composite_backward(samples.depths, fw.occupancy, fw.colors, d_depth, d_color, d_occ, d_col);

  Eigen::MatrixXd d_logit(1, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd d_rgb(3, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double o = fw.occupancy[i];
    d_logit(0, static_cast<Eigen::Index>(i)) = d_occ[i] * o * (1.0 - o);
    d_rgb.col(static_cast<Eigen::Index>(i)) = d_col[i];
  }
  Eigen::MatrixXd dz = field.occupancy.backward(fw.occ_act, d_logit, out.decoder.occupancy);
  dz += field.color.backward(fw.color_act, d_rgb, out.decoder.color);

  const auto F = static_cast<std::size_t>(field.grid.feature_dim());
  const int levels = field.grid.config().active_levels;
  std::vector<double> acc(static_cast<std::size_t>(levels) * 8 * F, 0.0);
  auto flush = [&](const InterpolationRecord& rec) {
    for (int l = 0; l < levels; ++l) {
      for (std::size_t k = 0; k < 8; ++k) {
        double* src = acc.data() + (static_cast<std::size_t>(l) * 8 + k) * F;
        out.slots.push_back(rec.levels[static_cast<std::size_t>(l)].slots[k]);
        out.slot_grads.insert(out.slot_grads.end(), src, src + F);
        std::fill_n(src, F, 0.0);
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = fw.records[i];
    const double* g = dz.col(static_cast<Eigen::Index>(i)).data();
    for (int l = 0; l < levels; ++l) {
      const auto& lvl = rec.levels[static_cast<std::size_t>(l)];
      for (std::size_t k = 0; k < 8; ++k) {
        double* dst = acc.data() + (static_cast<std::size_t>(l) * 8 + k) * F;
        const double w = lvl.weights[k];
        for (std::size_t f = 0; f < F; ++f) dst[f] += w * g[f];
      }
    }
    if (i + 1 == n || samples.leaves[i + 1] != samples.leaves[i]) flush(rec);
  }
}

LossReport run_batch(const NeuralField& field, std::span<const TrainingRay> rays, const TrainParams& params,
                     const std::uint64_t* jitter_seed, std::vector<BlockOutput>* outputs) {
  const std::size_t n_rays = rays.size();
  const std::size_t n_blocks = (n_rays + kRaysPerBlock - 1) / kRaysPerBlock;
  std::vector<RaySamples> samples(n_rays);
  parallel_blocks(n_blocks, params.threads, [&](std::size_t b) {
    std::mt19937_64 rng = block_rng(jitter_seed ? *jitter_seed : 0, b);
    const std::size_t end = std::min(n_rays, (b + 1) * kRaysPerBlock);
    for (std::size_t r = b * kRaysPerBlock; r < end; ++r) {
      samples[r] = sample_ray(field.grid, rays[r].ray, params.n_point, jitter_seed ? &rng : nullptr, params.t_min,
                              params.t_max);
    }
  });

  std::size_t color_rays = 0;
  std::size_t depth_rays = 0;
  for (std::size_t r = 0; r < n_rays; ++r) {
    if (!samples[r].observed) continue;
    ++color_rays;
    if (rays[r].target.depth > 0.0) ++depth_rays;
  }
  if (color_rays == 0) throw std::runtime_error("training batch has no observed rays");

  const double color_scale = 2.0 * params.lambda_p / (3.0 * static_cast<double>(color_rays));
  const double depth_scale = depth_rays > 0 ? 1.0 / static_cast<double>(depth_rays) : 0.0;
  std::vector<RayPrediction> predictions(n_rays);
  if (outputs) {
    outputs->assign(n_blocks, {});
    for (auto& o : *outputs) {
      o.decoder.occupancy.assign(field.occupancy.parameter_count(), 0.0);
      o.decoder.color.assign(field.color.parameter_count(), 0.0);
    }
  }
  parallel_blocks(n_blocks, params.threads, [&](std::size_t b) {
    RayForward fw;
    const std::size_t end = std::min(n_rays, (b + 1) * kRaysPerBlock);
    for (std::size_t r = b * kRaysPerBlock; r < end; ++r) {
      if (!samples[r].observed) continue;
      forward_ray(field, rays[r].ray, samples[r], fw, outputs != nullptr);
      predictions[r] = {fw.result.depth, fw.result.color, true};
      if (!outputs) continue;
      const RayTarget& t = rays[r].target;
      double d_depth = 0.0;
      if (t.depth > 0.0) {
        const double diff = fw.result.depth - t.depth;
        d_depth = depth_scale * static_cast<double>((diff > 0.0) - (diff < 0.0));
      }
      Vec3 d_color = color_scale * (fw.result.color - t.color);
      backward_ray(field, samples[r], fw, d_depth, d_color, (*outputs)[b]);
    }
  });

  std::vector<RayTarget> targets(n_rays);
  for (std::size_t r = 0; r < n_rays; ++r) targets[r] = rays[r].target;
  return compute_losses(predictions, targets, params.lambda_p);
}

}  // namespace

NeuralField::NeuralField(const FieldConfig& config)
    : grid(config.grid),
      occupancy(decoder_sizes(config, 1), Activation::relu, config.seed * 2 + 1),
      color(decoder_sizes(config, 3), Activation::relu, config.seed * 2 + 2),
      feature_state(config.feature_optimizer),
      occupancy_state(config.decoder_optimizer, occupancy.parameter_count()),
      color_state(config.decoder_optimizer, color.parameter_count()),
      config_(config) {}

NeuralField::NeuralField(OctreeFeatureGrid g, MlpDecoder occ, MlpDecoder col, const FieldConfig& config)
    : grid(std::move(g)),
      occupancy(std::move(occ)),
      color(std::move(col)),
      feature_state(config.feature_optimizer),
      occupancy_state(config.decoder_optimizer, occupancy.parameter_count()),
      color_state(config.decoder_optimizer, color.parameter_count()),
      config_(config) {}

std::uint64_t NeuralField::checksum() const {
  std::uint64_t h = io::checksum(grid.features());
  h = io::checksum(occupancy.parameters(), h);
  return io::checksum(color.parameters(), h);
}

void parallel_blocks(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t b = 0; b < count; ++b) fn(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < count; b = next++) {
        try {
          fn(b);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

RaySamples sample_ray(const OctreeFeatureGrid& grid, const Ray& ray, int n_point, std::mt19937_64* jitter,
                      double t_min, double t_max) {
  if (n_point < 1) throw std::invalid_argument("sample_ray: n_point must be >= 1");
  RaySamples out;
  grid.ray_voxel_intersections(ray, t_min, t_max, out.voxels);
  out.observed = !out.voxels.empty();
  out.depths.reserve(out.voxels.size() * static_cast<std::size_t>(n_point));
  out.leaves.reserve(out.depths.capacity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double inv_n = 1.0 / static_cast<double>(n_point);
  for (const VoxelHit& hit : out.voxels) {
    const double len = hit.t_exit - hit.t_entry;
    for (int k = 0; k < n_point; ++k) {
      const double u = jitter ? unit(*jitter) : 0.5;
      out.depths.push_back(hit.t_entry + (static_cast<double>(k) + u) * inv_n * len);
      out.leaves.push_back(hit.node);
    }
  }
  return out;
}

CompositeResult composite(std::span<const double> depths, std::span<const double> occupancies,
                          std::span<const Vec3> colors) {
  if (depths.size() != occupancies.size() || depths.size() != colors.size()) {
    throw std::invalid_argument("composite: input lengths differ");
  }
  CompositeResult out;
  out.weights.resize(depths.size());
  double transmittance = 1.0;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const double o = occupancies[i];
    if (!(o >= 0.0 && o <= 1.0)) throw std::invalid_argument("composite: occupancy outside [0, 1]");
    const double w = transmittance * o;
    out.weights[i] = w;
    out.depth += w * depths[i];
    out.color += w * colors[i];
    out.opacity += w;
    transmittance *= 1.0 - o;
  }
  out.observed = !depths.empty();
  return out;
}

void composite_backward(std::span<const double> depths, std::span<const double> occupancies,
                        std::span<const Vec3> colors, double d_depth, const Vec3& d_color,
                        std::span<double> d_occupancies, std::span<Vec3> d_colors) {
  const std::size_t n = depths.size();
  if (occupancies.size() != n || colors.size() != n || d_occupancies.size() != n || d_colors.size() != n) {
    throw std::invalid_argument("composite_backward: input lengths differ");
  }
  // T_i, then dL/do_i = T_i (G_i - S_i) with S_i the transmittance-weighted
  // gradient of everything behind sample i.
  std::vector<double> trans(n);
  double t = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    trans[i] = t;
    t *= 1.0 - occupancies[i];
  }
  double behind = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double g = d_depth * depths[k] + d_color.dot(colors[k]);
    d_occupancies[k] = trans[k] * (g - behind);
    d_colors[k] = trans[k] * occupancies[k] * d_color;
    behind = g * occupancies[k] + (1.0 - occupancies[k]) * behind;
  }
}

double render_uncertainty(std::span<const double> occupancies) {
  if (occupancies.empty()) return kUnobservedVariance;
  double sum = 0.0;
  for (double o : occupancies) sum += o * (1.0 - o);
  return std::clamp(sum / static_cast<double>(occupancies.size()), 0.0, kUnobservedVariance);
}

LossReport compute_losses(std::span<const RayPrediction> rendered, std::span<const RayTarget> truth,
                          double lambda_p) {
  if (rendered.size() != truth.size()) throw std::invalid_argument("compute_losses: size mismatch");
  LossReport report;
  double color_sum = 0.0;
  double depth_sum = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (!rendered[i].observed) continue;
    ++report.color_rays;
    color_sum += (rendered[i].color - truth[i].color).squaredNorm();
    if (truth[i].depth > 0.0) {
      ++report.depth_rays;
      depth_sum += std::abs(rendered[i].depth - truth[i].depth);
    }
  }
  if (report.color_rays == 0) throw std::invalid_argument("compute_losses: no observed rays");
  report.photometric = color_sum / (3.0 * static_cast<double>(report.color_rays));
  report.geometric = report.depth_rays > 0 ? depth_sum / static_cast<double>(report.depth_rays) : 0.0;
  report.total = lambda_p * report.photometric + report.geometric;
  return report;
}

LossReport accumulate_gradients(NeuralField& field, std::span<const TrainingRay> rays, const TrainParams& params,
                                std::uint64_t jitter_seed, DecoderGradients& grads) {
  std::vector<BlockOutput> outputs;
  const std::uint64_t* seed = params.jitter ? &jitter_seed : nullptr;
  LossReport report = run_batch(field, rays, params, seed, &outputs);
  grads.occupancy.resize(field.occupancy.parameter_count(), 0.0);
  grads.color.resize(field.color.parameter_count(), 0.0);
  const auto F = static_cast<std::size_t>(field.grid.feature_dim());
  for (const auto& block : outputs) {
    for (std::size_t i = 0; i < grads.occupancy.size(); ++i) grads.occupancy[i] += block.decoder.occupancy[i];
    for (std::size_t i = 0; i < grads.color.size(); ++i) grads.color[i] += block.decoder.color[i];
    for (std::size_t s = 0; s < block.slots.size(); ++s) {
      field.grid.accumulate_slot_gradient(block.slots[s], std::span(block.slot_grads.data() + s * F, F));
    }
  }
  return report;
}

LossReport evaluate_loss(const NeuralField& field, std::span<const TrainingRay> rays, const TrainParams& params) {
  return run_batch(field, rays, params, nullptr, nullptr);
}

StepStatus apply_gradients(NeuralField& field, const DecoderGradients& grads) {
  const auto F = static_cast<std::size_t>(field.grid.feature_dim());
  field.feature_state.resize(field.grid.features().size());
  StepStatus status = adam_step_sparse(field.grid.features(), field.grid.gradients(), field.feature_state,
                                       field.grid.touched_slots(), F);
  if (status == StepStatus::applied) {
    status = adam_step(field.occupancy.parameters(), grads.occupancy, field.occupancy_state);
  }
  if (status == StepStatus::applied) {
    status = adam_step(field.color.parameters(), grads.color, field.color_state);
  }
  field.grid.zero_gradients();
  return status;
}

LossReport train_step(NeuralField& field, std::span<const TrainingView> views, const TrainParams& params,
                      std::mt19937_64& rng) {
  if (views.empty()) throw std::invalid_argument("train_step: no training views");
  if (params.m_pixels < 1) throw std::invalid_argument("train_step: m_pixels must be >= 1");
  std::vector<TrainingRay> rays(static_cast<std::size_t>(params.m_pixels));
  std::uniform_int_distribution<std::size_t> pick_view(0, views.size() - 1);
  for (auto& tr : rays) {
    const TrainingView& view = views[pick_view(rng)];
    const Keyframe& kf = *view.keyframe;
    std::uniform_int_distribution<int> pick_u(0, kf.intrinsics.width - 1);
    std::uniform_int_distribution<int> pick_v(0, kf.intrinsics.height - 1);
    const int u = pick_u(rng);
    const int v = pick_v(rng);
    tr.ray = pixel_to_ray(kf.intrinsics, view.camera_in_field, u, v);
    tr.target = {kf.depth.at(u, v), kf.color.at(u, v)};
  }
  const std::uint64_t jitter_seed = rng();
  DecoderGradients grads;
  LossReport report = accumulate_gradients(field, rays, params, jitter_seed, grads);
  apply_gradients(field, grads);
  return report;
}

RayRender render_ray(const NeuralField& field, const Ray& ray, const RenderParams& params) {
  RayRender out;
  out.color = params.background;
  RaySamples samples = sample_ray(field.grid, ray, params.n_point, nullptr, params.t_min, params.t_max);
  if (!samples.observed) return out;
  RayForward fw;
  forward_ray(field, ray, samples, fw, false);
  out.opacity = fw.result.opacity;
  if (out.opacity < params.min_opacity) return out;
  out.observed = true;
  out.depth = fw.result.depth;
  out.color = fw.result.color.cwiseMax(0.0).cwiseMin(1.0);
  out.uncertainty = render_uncertainty(fw.occupancy);
  return out;
}

RenderedView render_view(const NeuralField& field, const Pose& camera_in_field, const Intrinsics& intr,
                         const RenderParams& params) {
  intr.validate();
  RenderedView view{ColorImage(intr.width, intr.height, params.background), DepthImage(intr.width, intr.height, 0.0),
                    ScalarImage(intr.width, intr.height, kUnobservedVariance), MaskImage(intr.width, intr.height, 0)};
  const Aabb& bounds = field.grid.allocated_bounds();
  if (bounds.empty) return view;
  parallel_blocks(static_cast<std::size_t>(intr.height), params.threads, [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < intr.width; ++u) {
      RayRender r = render_ray(field, pixel_to_ray(intr, camera_in_field, u, v), params);
      view.color.at(u, v) = r.color;
      view.depth.at(u, v) = r.depth;
      view.uncertainty.at(u, v) = r.uncertainty;
      view.observed.at(u, v) = r.observed ? 1 : 0;
    }
  });
  return view;
}

}  // namespace nimap
