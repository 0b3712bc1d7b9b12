#include "nimap/metrics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nimap {

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> gaussian_window() {
  constexpr int kSize = 11;
  constexpr double kSigma = 1.5;
  std::vector<double> w(kSize);
  double sum = 0.0;
  for (int i = 0; i < kSize; ++i) {
    const double d = i - kSize / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& x : w) x /= sum;
  return w;
}

// Separable valid-region filter of a single-channel image.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

MaskImage valid_depth_mask(const DepthImage& gt) {
  MaskImage mask(gt.width, gt.height, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) mask.data[i] = gt.data[i] > 0.0 ? 1 : 0;
  return mask;
}

double depth_l1(const DepthImage& pred, const DepthImage& gt, const MaskImage& valid) {
  if (!pred.same_shape(gt) || pred.width != valid.width || pred.height != valid.height) {
    throw std::invalid_argument("depth_l1: image shapes differ");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid.data[i]) continue;
    sum += std::abs(pred.data[i] - gt.data[i]);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("depth_l1: empty mask");
  return 100.0 * sum / static_cast<double>(count);
}

double psnr(const ColorImage& pred, const ColorImage& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("psnr: image shapes differ");
  if (pred.size() == 0) throw std::invalid_argument("psnr: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred.data[i] - gt.data[i]).squaredNorm();
  const double mse = sum / (3.0 * static_cast<double>(pred.size()));
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ColorImage& pred, const ColorImage& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("ssim: image shapes differ");
  const int w = pred.width;
  const int h = pred.height;
  if (w < 11 || h < 11) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const auto k = gaussian_window();
  constexpr double C1 = (0.01 * 0.01);
  constexpr double C2 = (0.03 * 0.03);
  const std::size_t n = pred.size();
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = pred.data[i][c];
      b[i] = gt.data[i][c];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, w, h, k);
    const auto mu_b = filter_valid(b, w, h, k);
    const auto s_aa = filter_valid(aa, w, h, k);
    const auto s_bb = filter_valid(bb, w, h, k);
    const auto s_ab = filter_valid(ab, w, h, k);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i];
      const double mb = mu_b[i];
      const double va = s_aa[i] - ma * ma;
      const double vb = s_bb[i] - mb * mb;
      const double cov = s_ab[i] - ma * mb;
      total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

Pose rigid_align(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rigid_align: point sets differ in size");
  Vec3 ca = Vec3::Zero();
  Vec3 cb = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= static_cast<double>(a.size());
  cb /= static_cast<double>(b.size());
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) H += (a[i] - ca) * (b[i] - cb).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Mat3 R = svd.matrixV() * D * svd.matrixU().transpose();
  return Pose(R, cb - R * ca);
}

double ate_rmse(std::span<const Pose> est, std::span<const Pose> gt) {
  if (est.size() != gt.size()) throw std::invalid_argument("ate_rmse: trajectories differ in length");
  if (est.size() < 3) throw std::invalid_argument("ate_rmse: need at least 3 poses");
  std::vector<Vec3> a, b;
  for (std::size_t i = 0; i < est.size(); ++i) {
    a.push_back(est[i].translation());
    b.push_back(gt[i].translation());
  }
  const Pose T = rigid_align(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (T.apply(a[i]) - b[i]).squaredNorm();
  return 100.0 * std::sqrt(sum / static_cast<double>(a.size()));
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: inputs differ in length");
  if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 values");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean(rx);
  const double my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::domain_error("spearman: constant input has no rank correlation");
  return sxy / std::sqrt(sxx * syy);
}

UncertaintyCorrelation uncertainty_correlation(std::span<const ViewRecord> views) {
  if (views.size() < 4) throw std::invalid_argument("uncertainty_correlation: need at least 4 views");
  std::vector<double> u, d, p;
  for (const auto& v : views) {
    u.push_back(v.mean_uncertainty);
    d.push_back(v.depth_l1_cm);
    p.push_back(v.psnr_db);
  }
  return {spearman(u, d), spearman(u, p)};
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace nimap
