#include "do3d/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "do3d/loss.hpp"
#include "do3d/warp.hpp"

namespace do3d {

std::string_view to_string(MotionCase c) {
  switch (c) {
    case MotionCase::Static: return "STATIC";
    case MotionCase::Opposite: return "OPPOSITE";
    case MotionCase::SameSlower: return "SAME_SLOWER";
    case MotionCase::SameFasterOrEqual: return "SAME_FASTER_OR_EQUAL";
  }
  return "UNKNOWN";
}

void MotionScenario::validate() const {
  if (!(d_gt > 0.0)) throw DomainError("d_gt must be positive");
  if (!(t3 < 0.0)) throw DomainError("only forward ego motion (t3 < 0) is analyzed");
  if (!(d_gt + t3 + delta_t3 > 0.0))
    throw DomainError("the moving point must stay in front of the camera (d_gt + t3 + dt3 > 0)");
}

SourcePixel u_s_full(const Intrinsics& K, const PoseSE3& T, double u_t, double v_t, double d_t) {
  const double ux = (u_t - K.cx) / K.fx;
  const double vy = (v_t - K.cy) / K.fy;
  const Eigen::Matrix3d& R = T.R;
  const Eigen::Vector3d& t = T.t;
  const double den = R(2, 0) * ux * d_t + R(2, 1) * vy * d_t + R(2, 2) * d_t + t.z();
  if (!(den > 0.0)) throw BehindCameraError("u_s_full: projected point is behind the source camera");
  SourcePixel p;
  p.u = K.fx * (R(0, 0) * ux * d_t + R(0, 1) * vy * d_t + R(0, 2) * d_t + t.x()) / den + K.cx;
  p.v = K.fy * (R(1, 0) * ux * d_t + R(1, 1) * vy * d_t + R(1, 2) * d_t + t.y()) / den + K.cy;
  return p;
}

double u_s_simplified(const Intrinsics& K, double u_t, double d_t, const Eigen::Vector3d& t) {
  const double den = d_t + t.z();
  if (!(den > 0.0)) throw DomainError("u_s_simplified: d + t3 must be positive");
  return (d_t * (u_t - K.cx) + K.fx * t.x()) / den + K.cx;
}

DepthDerivative dus_dd(const Intrinsics& K, double u_t, double d_t, double t3) {
  const double den = d_t + t3;
  if (den == 0.0) throw DomainError("dus_dd: singular at d + t3 = 0");
  DepthDerivative out;
  out.value = (u_t - K.cx) * t3 / (den * den);
  out.sign = (out.value > 0.0) - (out.value < 0.0);
  return out;
}

double observed_source_u(const Intrinsics& K, double u_t, const MotionScenario& s) {
  s.validate();
  return s.d_gt * (u_t - K.cx) / (s.d_gt + s.t3 + s.delta_t3) + K.cx;
}

SupervisionTarget supervision_target(const MotionScenario& s) {
  s.validate();
  SupervisionTarget out;
  if (s.delta_t3 == 0.0) {
    out.label = MotionCase::Static;
    out.depth = s.d_gt;
  } else if (s.delta_t3 < 0.0) {
    out.label = MotionCase::Opposite;
    out.depth = s.t3 / (s.t3 + s.delta_t3) * s.d_gt;
  } else if (s.delta_t3 < -s.t3) {
    out.label = MotionCase::SameSlower;
    out.depth = s.t3 / (s.t3 + s.delta_t3) * s.d_gt;
  } else {
    out.label = MotionCase::SameFasterOrEqual;
  }
  return out;
}

SweepConfig default_sweep(double d_gt) { return SweepConfig{0.1 * d_gt, 5.0 * d_gt, 200}; }

DepthLossCurve loss_depth_sweep(const SweepInput& in, const SweepConfig& sweep, double d_gt) {
  require_same_shape(in.target, in.source, "sweep images");
  require_same_shape(in.target, in.region, "sweep region");
  if (in.motion != nullptr) require_same_shape(in.target, *in.motion, "sweep motion");
  if (sweep.samples < 2) throw DegenerateInputError("depth sweep needs at least two samples");
  if (!(sweep.depth_min > 0.0 && sweep.depth_max > sweep.depth_min))
    throw DomainError("depth sweep range must satisfy 0 < min < max");
  if (mask_count(in.region) == 0) throw DegenerateInputError("depth sweep region is empty");

  // Pixels on the region boundary sample across the silhouette in the source,
  // and their neighbours see them through the SSIM window; both are dropped.
  const BinaryMask core = ssim_support_mask(in.region);
  DepthLossCurve curve;
  curve.d_gt = d_gt;
  const int h = in.target.height(), w = in.target.width();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < sweep.samples; ++i) {
    const double d = sweep.depth_min + (sweep.depth_max - sweep.depth_min) * i / (sweep.samples - 1);
    const ScalarField depth(h, w, d);
    const CorrespondenceMap corr = in.motion != nullptr ? project_correspondence(depth, in.K, in.ego, *in.motion)
                                                        : project_correspondence(depth, in.K, in.ego);
    const WarpResult<ColorImage> warped = inverse_warp(in.source, corr);
    const BinaryMask valid = ssim_support_mask(mask_and(warped.valid, core));
    double loss = std::numeric_limits<double>::quiet_NaN();
    if (mask_count(valid) > 0) loss = photometric_loss(warped.image, in.target, valid, in.alpha);
    curve.depths.push_back(d);
    curve.losses.push_back(loss);
    if (loss < best) {
      best = loss;
      curve.argmin = static_cast<std::size_t>(i);
    }
  }
  if (!std::isfinite(best)) throw DegenerateInputError("depth sweep: no sample produced a valid region pixel");
  curve.argmin_depth = curve.depths[curve.argmin];
  return curve;
}

std::string curve_csv(const DepthLossCurve& curve) {
  std::ostringstream out;
  out.precision(12);
  out << "depth,loss,is_argmin\n";
  for (std::size_t i = 0; i < curve.depths.size(); ++i)
    out << curve.depths[i] << ',' << curve.losses[i] << ',' << (i == curve.argmin ? 1 : 0) << '\n';
  out << "# argmin=" << curve.argmin_depth << ", d_gt=" << curve.d_gt
      << ", case=" << (curve.case_label.empty() ? "UNSPECIFIED" : curve.case_label) << '\n';
  return out.str();
}

}  // namespace do3d
