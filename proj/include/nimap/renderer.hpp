#pragma once

#include "nimap/frame.hpp"
#include "nimap/nets.hpp"
#include "nimap/octree_grid.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace nimap {

struct FieldConfig {
  GridConfig grid;
  int hidden_dim = 32;
  AdamConfig feature_optimizer{.lr = 1e-2};
  AdamConfig decoder_optimizer{.lr = 1e-3};
  std::uint64_t seed = 1;
};

/// One octree feature grid plus its occupancy and color decoders and the
/// optimizer state for all three.
class NeuralField {
 public:
  explicit NeuralField(const FieldConfig& config);
  NeuralField(OctreeFeatureGrid grid, MlpDecoder occupancy, MlpDecoder color, const FieldConfig& config);

  OctreeFeatureGrid grid;
  MlpDecoder occupancy;
  MlpDecoder color;
  OptimizerState feature_state;
  OptimizerState occupancy_state;
  OptimizerState color_state;

  const FieldConfig& config() const { return config_; }
  /// FNV-1a over features and decoder weights.
  std::uint64_t checksum() const;

 private:
  FieldConfig config_;
};

struct RaySamples {
  std::vector<double> depths;
  std::vector<std::int32_t> leaves;  // leaf node per sample
  std::vector<VoxelHit> voxels;
  bool observed = false;
};

/// n_point stratified samples inside every allocated leaf the ray crosses.
/// `jitter == nullptr` places samples at stratum centres.
RaySamples sample_ray(const OctreeFeatureGrid& grid, const Ray& ray, int n_point, std::mt19937_64* jitter,
                      double t_min, double t_max);

struct CompositeResult {
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  std::vector<double> weights;
  double opacity = 0.0;  // sum of weights
  bool observed = false;
};

/// w_i = o_i * prod_{j<i}(1 - o_j); depth and color are the weighted sums.
/// Throws std::invalid_argument for occupancies outside [0, 1].
CompositeResult composite(std::span<const double> depths, std::span<const double> occupancies,
                          std::span<const Vec3> colors);

/// Adjoint of composite: fills dL/do_i and dL/dc_i from dL/dD and dL/dC.
void composite_backward(std::span<const double> depths, std::span<const double> occupancies,
                        std::span<const Vec3> colors, double d_depth, const Vec3& d_color,
                        std::span<double> d_occupancies, std::span<Vec3> d_colors);

inline constexpr double kUnobservedVariance = 0.25;

/// Mean Bernoulli variance o(1-o) along the ray; 0.25 when there are no samples.
double render_uncertainty(std::span<const double> occupancies);

struct RayPrediction {
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  bool observed = false;
};

struct RayTarget {
  double depth = 0.0;  // <= 0 marks invalid depth
  Vec3 color = Vec3::Zero();
};

struct LossReport {
  double photometric = 0.0;
  double geometric = 0.0;
  double total = 0.0;
  std::size_t color_rays = 0;
  std::size_t depth_rays = 0;
};

/// Mean squared color error over observed rays and channels, mean absolute
/// depth error over observed rays with valid depth. Throws
/// std::invalid_argument when no ray is observed.
LossReport compute_losses(std::span<const RayPrediction> rendered, std::span<const RayTarget> truth,
                          double lambda_p);

struct TrainParams {
  int m_pixels = 5000;
  int n_point = 10;
  double lambda_p = 1.0;
  double t_min = 0.05;
  double t_max = 20.0;
  bool jitter = true;
  int threads = 1;
};

struct TrainingRay {
  Ray ray;
  RayTarget target;
};

/// Keyframe plus the camera pose expressed in the field's frame.
struct TrainingView {
  const Keyframe* keyframe = nullptr;
  Pose camera_in_field;
};

struct DecoderGradients {
  std::vector<double> occupancy;
  std::vector<double> color;
};

/// Forward + reverse pass over a ray batch. Feature gradients accumulate into
/// field.grid's gradient buffer (merged in a fixed block order), decoder
/// gradients into `grads`. Throws std::runtime_error if no ray is observed.
LossReport accumulate_gradients(NeuralField& field, std::span<const TrainingRay> rays, const TrainParams& params,
                                std::uint64_t jitter_seed, DecoderGradients& grads);

/// Loss only, deterministic sample placement.
LossReport evaluate_loss(const NeuralField& field, std::span<const TrainingRay> rays, const TrainParams& params);

/// Adam step on touched features and both decoders; clears feature gradients.
StepStatus apply_gradients(NeuralField& field, const DecoderGradients& grads);

/// Uniformly samples m_pixels over the views, renders, back-propagates and
/// takes one optimizer step.
LossReport train_step(NeuralField& field, std::span<const TrainingView> views, const TrainParams& params,
                      std::mt19937_64& rng);

struct RenderParams {
  int n_point = 10;
  double t_min = 0.05;
  double t_max = 20.0;
  /// Rays whose accumulated opacity stays below this never reached a surface
  /// inside the field and are reported as unobserved.
  double min_opacity = 0.5;
  Vec3 background = Vec3::Zero();
  int threads = 1;
};

struct RayRender {
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double uncertainty = kUnobservedVariance;
  double opacity = 0.0;
  bool observed = false;
};

RayRender render_ray(const NeuralField& field, const Ray& ray, const RenderParams& params);

struct RenderedView {
  ColorImage color;
  DepthImage depth;
  ScalarImage uncertainty;
  MaskImage observed;
};

/// Deterministic full-image render; colors clamped to [0, 1].
RenderedView render_view(const NeuralField& field, const Pose& camera_in_field, const Intrinsics& intrinsics,
                         const RenderParams& params);

/// Runs fn(block) for block in [0, count) on up to `threads` workers.
void parallel_blocks(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace nimap
