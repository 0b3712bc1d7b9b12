#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace nimap {

enum class Activation { relu, identity };

/// Fully connected decoder. All weights and biases live in one flat buffer;
/// layer l stores W_l (out x in, column-major) followed by b_l.
class MlpDecoder {
 public:
  MlpDecoder() = default;
  /// `layer_sizes` = {input, hidden..., output}. Weights are drawn uniform in
  /// +-1/sqrt(fan_in) (Kaiming-uniform style), biases start at zero.
  MlpDecoder(std::vector<int> layer_sizes, Activation hidden_activation, std::uint64_t seed);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation activation() const { return activation_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  /// Inputs and pre-activations of each layer for a batch (one column per sample).
  struct Activations {
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::MatrixXd> pre;
  };

  /// Raw output for a batch of column inputs. Throws std::invalid_argument on
  /// a dimension mismatch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Activations* saved = nullptr) const;

  /// Reverse pass. Adds dL/dtheta into `param_grad` (same layout as
  /// parameters()) and returns dL/dinput.
  Eigen::MatrixXd backward(const Activations& saved, const Eigen::MatrixXd& d_out,
                           std::span<double> param_grad) const;

  void save(std::ostream& out) const;
  static MlpDecoder load(std::istream& in);

 private:
  std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  Activation activation_ = Activation::relu;
  std::vector<double> params_;
};

double sigmoid(double x);

struct OccupancyOutput {
  double occupancy = 0.5;
  double logit = 0.0;
  MlpDecoder::Activations saved;
};

/// o = sigmoid(f_occ(z)).
OccupancyOutput decode_occupancy(const MlpDecoder& dec, std::span<const double> z);

struct ColorOutput {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  MlpDecoder::Activations saved;
};

/// c = f_color(z), unclamped.
ColorOutput decode_color(const MlpDecoder& dec, std::span<const double> z);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit OptimizerState(AdamConfig cfg = {}, std::size_t size = 0) : config(cfg), m(size, 0.0), v(size, 0.0) {}
  void resize(std::size_t size) {
    m.resize(size, 0.0);
    v.resize(size, 0.0);
  }
};

enum class StepStatus { applied, skipped_non_finite };

/// Bias-corrected Adam update over the whole buffer.
StepStatus adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state);

/// Adam restricted to the listed blocks of `block` consecutive entries
/// (lazy/sparse Adam); the step counter advances once per call.
StepStatus adam_step_sparse(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                            std::span<const std::uint32_t> blocks, std::size_t block);

}  // namespace nimap
