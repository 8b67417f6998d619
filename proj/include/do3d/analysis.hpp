#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "do3d/camera.hpp"
#include "do3d/grid.hpp"

namespace do3d {

/// Closed-form model of how photometric supervision biases depth when an
/// object moves along the optical axis while the camera drives forward.

enum class MotionCase { Static, Opposite, SameSlower, SameFasterOrEqual };

std::string_view to_string(MotionCase c);

/// Forward ego motion t3 < 0, object z-motion delta_t3, true depth d_gt.
struct MotionScenario {
  double t3 = -1.0;
  double delta_t3 = 0.0;
  double d_gt = 10.0;

  /// Throws DomainError unless d_gt > 0, t3 < 0 and d_gt + t3 + delta_t3 > 0.
  void validate() const;
};

struct SourcePixel {
  double u = 0.0;
  double v = 0.0;
};

/// Source pixel of (u_t, v_t) at depth d_t under a general pose, expanded
/// in closed form. Throws BehindCameraError for a non-positive denominator.
SourcePixel u_s_full(const Intrinsics& K, const PoseSE3& T, double u_t, double v_t, double d_t);

/// u_s = (d (u_t - cx) + fx t1) / (d + t3) + cx, valid for R = I.
/// Throws DomainError when d + t3 <= 0.
double u_s_simplified(const Intrinsics& K, double u_t, double d_t, const Eigen::Vector3d& t);

struct DepthDerivative {
  double value = 0.0;
  int sign = 0;  // -1, 0, +1
};

/// du_s/dd = (u_t - cx) t3 / (d + t3)^2 for pure z-translation.
DepthDerivative dus_dd(const Intrinsics& K, double u_t, double d_t, double t3);

/// Where the moving point is actually observed in the source frame.
double observed_source_u(const Intrinsics& K, double u_t, const MotionScenario& s);

struct SupervisionTarget {
  MotionCase label = MotionCase::Static;
  /// Depth that zeroes the reprojection error; empty when it is unreachable
  /// and the loss keeps pulling depth toward infinity.
  std::optional<double> depth;

  bool diverges() const { return !depth.has_value(); }
};

/// d -> t3 / (t3 + delta_t3) * d_gt, with delta_t3 >= -t3 flagged divergent.
SupervisionTarget supervision_target(const MotionScenario& s);

struct SweepConfig {
  double depth_min = 1.0;
  double depth_max = 50.0;
  int samples = 200;
};

/// Uniform sweep over [0.1, 5] * d_gt with 200 samples.
SweepConfig default_sweep(double d_gt);

struct DepthLossCurve {
  std::vector<double> depths;
  std::vector<double> losses;  // NaN where no region pixel qualified
  std::size_t argmin = 0;
  double argmin_depth = 0.0;
  double d_gt = 0.0;
  std::string case_label;

  double step() const { return depths.size() > 1 ? depths[1] - depths[0] : 0.0; }
};

struct SweepInput {
  const ColorImage& target;
  const ColorImage& source;
  const BinaryMask& region;
  const Intrinsics& K;
  const PoseSE3& ego;
  const VectorField3* motion = nullptr;  // optional object motion map
  double alpha = 0.85;
};

/// Assigns each sampled depth to the whole frame, warps the source, and
/// records the photometric loss over region pixels at least two pixels from
/// the region boundary whose 3x3 window is warp-valid.
/// Throws DegenerateInputError for an empty region, fewer than two samples
/// or when no sample has a valid region pixel.
DepthLossCurve loss_depth_sweep(const SweepInput& input, const SweepConfig& sweep, double d_gt);

/// "depth,loss,is_argmin" rows followed by a "# argmin=..., d_gt=..., case=..." line.
std::string curve_csv(const DepthLossCurve& curve);

}  // namespace do3d
