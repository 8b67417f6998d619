#pragma once

#include <optional>

#include "do3d/grid.hpp"

namespace do3d {

/// Weights of the total objective and the SSIM/L1 balance of the
/// photometric term.
struct LossWeights {
  double w_ph = 1.0;
  double w_ds = 0.001;
  double w_m = 1.0;
  double alpha = 0.85;

  void validate() const;
};

/// SSIM stabilizers for intensities in [0, 1].
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Per-pixel SSIM over 3x3 uniform windows (reflect padding at the border),
/// averaged over channels.
ScalarField ssim_map(const ColorImage& a, const ColorImage& b);

/// Pixels whose whole SSIM window (with the same reflect padding) lies in `mask`.
BinaryMask ssim_support_mask(const BinaryMask& mask);

/// Back-propagates `grad` (dL/dSSIM per pixel, as returned by ssim_map)
/// to dL/da.
ColorImage ssim_backward(const ColorImage& a, const ColorImage& b, const ScalarField& grad);

/// alpha/2 (1 - SSIM) + (1 - alpha) * mean-over-channels |a - b|, per pixel.
ScalarField photometric_loss_map(const ColorImage& pred, const ColorImage& target, double alpha);

/// Mean of photometric_loss_map over pixels with valid > 0.5.
/// Throws DegenerateInputError for an empty valid mask.
double photometric_loss(const ColorImage& pred, const ColorImage& target, const BinaryMask& valid,
                        double alpha);

struct PhotometricGradient {
  double loss = 0.0;
  std::size_t valid_count = 0;
  ColorImage d_pred;  // dL/dpred
};
PhotometricGradient photometric_loss_with_gradient(const ColorImage& pred, const ColorImage& target,
                                                   const BinaryMask& valid, double alpha);

/// Edge-aware smoothness of the mean-normalized inverse depth.
/// Throws DomainError for non-positive depth.
double smoothness_loss(const ScalarField& depth, const ColorImage& image);

struct SmoothnessGradient {
  double loss = 0.0;
  ScalarField d_depth;
};
SmoothnessGradient smoothness_loss_with_gradient(const ScalarField& depth, const ColorImage& image);

/// 1 - soft IoU; zero when both masks are empty.
double mask_loss(const BinaryMask& m_hat, const BinaryMask& m);

struct MaskLossGradient {
  double loss = 0.0;
  BinaryMask d_m_hat;
};
/// Same as mask_loss but restricted to pixels where `valid` is set.
MaskLossGradient mask_loss_with_gradient(const BinaryMask& m_hat, const BinaryMask& m,
                                         const BinaryMask& valid);

struct LossComponents {
  double photometric = 0.0;
  double smoothness = 0.0;
  double mask = 0.0;
};

double total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace do3d
