#include "nimap/nets.hpp"

#include "nimap/binary_io.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace nimap {

namespace {
constexpr char kMlpTag[9] = "NMMLP\0\0\0";
constexpr std::uint32_t kMlpVersion = 1;
}  // namespace

MlpDecoder::MlpDecoder(std::vector<int> layer_sizes, Activation hidden_activation, std::uint64_t seed)
    : sizes_(std::move(layer_sizes)), activation_(hidden_activation) {
  if (sizes_.size() < 2) throw std::invalid_argument("MlpDecoder needs at least input and output sizes");
  for (int s : sizes_) {
    if (s < 1) throw std::invalid_argument("MlpDecoder layer sizes must be positive");
  }
  std::size_t total = 0;
  for (int l = 0; l < layer_count(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l + 1]) * static_cast<std::size_t>(sizes_[l]) +
             static_cast<std::size_t>(sizes_[l + 1]);
  }
  params_.assign(total, 0.0);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto W = weight(l);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = dist(rng);
    }
  }
}

Eigen::Map<Eigen::MatrixXd> MlpDecoder::weight(int layer) {
  return {params_.data() + weight_offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<const Eigen::MatrixXd> MlpDecoder::weight(int layer) const {
  return {params_.data() + weight_offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<Eigen::VectorXd> MlpDecoder::bias(int layer) {
  return {params_.data() + weight_offset(layer) +
              static_cast<std::size_t>(sizes_[layer + 1]) * static_cast<std::size_t>(sizes_[layer]),
          sizes_[layer + 1]};
}
Eigen::Map<const Eigen::VectorXd> MlpDecoder::bias(int layer) const {
  return {params_.data() + weight_offset(layer) +
              static_cast<std::size_t>(sizes_[layer + 1]) * static_cast<std::size_t>(sizes_[layer]),
          sizes_[layer + 1]};
}

Eigen::MatrixXd MlpDecoder::forward(const Eigen::MatrixXd& input, Activations* saved) const {
  if (input.rows() != input_dim()) {
    throw std::invalid_argument("MlpDecoder::forward: input has " + std::to_string(input.rows()) +
                                " rows, expected " + std::to_string(input_dim()));
  }
  if (saved) {
    saved->inputs.resize(static_cast<std::size_t>(layer_count()));
    saved->pre.resize(static_cast<std::size_t>(layer_count()));
  }
  Eigen::MatrixXd x = input;
  for (int l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd pre = weight(l) * x;
    pre.colwise() += bias(l);
    if (saved) {
      saved->inputs[static_cast<std::size_t>(l)] = x;
      saved->pre[static_cast<std::size_t>(l)] = pre;
    }
    if (l + 1 < layer_count() && activation_ == Activation::relu) {
      x = pre.cwiseMax(0.0);
    } else {
      x = std::move(pre);
    }
  }
  return x;
}

Eigen::MatrixXd MlpDecoder::backward(const Activations& saved, const Eigen::MatrixXd& d_out,
                                     std::span<double> param_grad) const {
  if (saved.pre.size() != static_cast<std::size_t>(layer_count()) ||
      saved.inputs.size() != static_cast<std::size_t>(layer_count())) {
    throw std::invalid_argument("MlpDecoder::backward: activations do not match this decoder");
  }
  if (param_grad.size() != params_.size()) {
    throw std::invalid_argument("MlpDecoder::backward: gradient buffer has wrong size");
  }
  const Eigen::Index batch = saved.inputs.front().cols();
  if (d_out.rows() != output_dim() || d_out.cols() != batch) {
    throw std::invalid_argument("MlpDecoder::backward: output gradient shape mismatch");
  }
  Eigen::MatrixXd delta = d_out;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const auto& pre = saved.pre[static_cast<std::size_t>(l)];
    if (l + 1 < layer_count() && activation_ == Activation::relu) {
      delta = delta.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    }
    const auto& x = saved.inputs[static_cast<std::size_t>(l)];
    const std::size_t off = weight_offset(l);
    const auto rows = static_cast<Eigen::Index>(sizes_[l + 1]);
    const auto cols = static_cast<Eigen::Index>(sizes_[l]);
    Eigen::Map<Eigen::MatrixXd> dW(param_grad.data() + off, rows, cols);
    Eigen::Map<Eigen::VectorXd> db(param_grad.data() + off + static_cast<std::size_t>(rows * cols), rows);
    dW.noalias() += delta * x.transpose();
    db += delta.rowwise().sum();
    delta = weight(l).transpose() * delta;
  }
  return delta;
}

void MlpDecoder::save(std::ostream& out) const {
  io::write_tag(out, kMlpTag, kMlpVersion);
  std::vector<std::int32_t> sizes(sizes_.begin(), sizes_.end());
  io::write_array<std::int32_t>(out, sizes);
  io::write<std::int32_t>(out, activation_ == Activation::relu ? 0 : 1);
  io::write_array<double>(out, params_);
}

MlpDecoder MlpDecoder::load(std::istream& in) {
  io::expect_tag(in, kMlpTag, kMlpVersion);
  auto sizes = io::read_array<std::int32_t>(in, 64);
  auto act = io::read<std::int32_t>(in);
  if (act != 0 && act != 1) throw io::FormatError("decoder chunk: unknown activation");
  MlpDecoder dec(std::vector<int>(sizes.begin(), sizes.end()), act == 0 ? Activation::relu : Activation::identity, 0);
  auto params = io::read_array<double>(in);
  if (params.size() != dec.params_.size()) throw io::FormatError("decoder chunk: parameter count mismatch");
  dec.params_ = std::move(params);
  return dec;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

OccupancyOutput decode_occupancy(const MlpDecoder& dec, std::span<const double> z) {
  if (dec.output_dim() != 1) throw std::invalid_argument("decode_occupancy: decoder must have one output");
  OccupancyOutput out;
  Eigen::Map<const Eigen::VectorXd> input(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::MatrixXd raw = dec.forward(input, &out.saved);
  out.logit = raw(0, 0);
  out.occupancy = sigmoid(out.logit);
  return out;
}

ColorOutput decode_color(const MlpDecoder& dec, std::span<const double> z) {
  if (dec.output_dim() != 3) throw std::invalid_argument("decode_color: decoder must have three outputs");
  ColorOutput out;
  Eigen::Map<const Eigen::VectorXd> input(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::MatrixXd raw = dec.forward(input, &out.saved);
  out.color = raw.col(0);
  return out;
}

namespace {

bool all_finite(std::span<const double> values) {
  for (double g : values) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

}  // namespace

StepStatus adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment sizes differ");
  }
  if (!all_finite(grads)) return StepStatus::skipped_non_finite;
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
  return StepStatus::applied;
}

StepStatus adam_step_sparse(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                            std::span<const std::uint32_t> blocks, std::size_t block) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step_sparse: parameter, gradient and moment sizes differ");
  }
  for (std::uint32_t b : blocks) {
    if ((static_cast<std::size_t>(b) + 1) * block > params.size()) {
      throw std::out_of_range("adam_step_sparse: block index out of range");
    }
    if (!all_finite(grads.subspan(static_cast<std::size_t>(b) * block, block))) {
      return StepStatus::skipped_non_finite;
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::uint32_t b : blocks) {
    const std::size_t begin = static_cast<std::size_t>(b) * block;
    for (std::size_t i = begin; i < begin + block; ++i) {
      state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
      state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
      params[i] -= c.lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + c.eps);
    }
  }
  return StepStatus::applied;
}

}  // namespace nimap
