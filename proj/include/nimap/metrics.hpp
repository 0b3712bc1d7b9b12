#pragma once

#include "nimap/frame.hpp"
#include "nimap/geometry.hpp"

#include <span>
#include <vector>

namespace nimap {

/// Mean |pred - gt| in centimeters over pixels where `valid` is nonzero.
/// Throws std::invalid_argument on shape mismatch or an empty mask.
double depth_l1(const DepthImage& pred, const DepthImage& gt, const MaskImage& valid);
/// Mask of pixels with valid (> 0) ground-truth depth.
MaskImage valid_depth_mask(const DepthImage& gt);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all pixels and channels; 99 dB when MSE < 1e-10.
double psnr(const ColorImage& pred, const ColorImage& gt);

/// Mean SSIM over the three channels with an 11x11 Gaussian window
/// (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1. Only windows fully
/// inside the image are averaged.
double ssim(const ColorImage& pred, const ColorImage& gt);

/// Closed-form rigid alignment (no scale) of `est` positions onto `gt`, then
/// RMSE of the residuals in centimeters. Throws for fewer than 3 poses or
/// mismatched lengths.
double ate_rmse(std::span<const Pose> est, std::span<const Pose> gt);

/// Rotation R and translation t minimizing sum |R a_i + t - b_i|^2.
Pose rigid_align(std::span<const Vec3> a, std::span<const Vec3> b);

/// Spearman rank correlation with average ranks for ties. Throws
/// std::domain_error when either input is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct ViewRecord {
  double mean_uncertainty = 0.0;
  double depth_l1_cm = 0.0;
  double psnr_db = 0.0;
};

struct UncertaintyCorrelation {
  double rho_depth = 0.0;  // rho(mean variance, depth L1)
  double rho_psnr = 0.0;   // rho(mean variance, PSNR)
};

/// Throws std::invalid_argument for fewer than 4 views.
UncertaintyCorrelation uncertainty_correlation(std::span<const ViewRecord> views);

/// Arithmetic mean; 0 for an empty input.
double mean(std::span<const double> values);

}  // namespace nimap
