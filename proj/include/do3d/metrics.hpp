#pragma once

#include <optional>
#include <string>
#include <utility>

#include "do3d/grid.hpp"
#include "do3d/motion.hpp"

namespace do3d {

inline constexpr double kDepthCap = 80.0;
inline constexpr double kDepthFloor = 1e-3;
/// Depth-to-disparity constant: fx times a nominal 0.54 m stereo baseline.
inline constexpr double kDisparityBaseline = 0.54;

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  /// median(gt) / median(pred), or 1 without median scaling.
  double scale = 1.0;
};

/// Throws DegenerateInputError for an empty mask or a zero median prediction.
DepthMetrics depth_metrics(const ScalarField& pred, const ScalarField& gt, const BinaryMask& valid,
                           bool median_scale = true, double cap = kDepthCap);

/// Median over masked pixels (mean of the two middle values for even counts).
double masked_median(const ScalarField& field, const BinaryMask& mask);

/// EPE per region; nullopt where the region is empty.
struct FlowReport {
  std::optional<double> noc_bg, noc_fg, noc_all;
  std::optional<double> occ_bg, occ_fg, occ_all;
  std::size_t noc_bg_count = 0, noc_fg_count = 0, occ_bg_count = 0, occ_fg_count = 0;
};

/// Occ = all valid pixels; Noc = valid and non-occluded.
FlowReport flow_epe(const FlowField& pred, const FlowField& gt, const BinaryMask& valid, const BinaryMask& noc,
                    const BinaryMask& fg);

struct SceneFlowReport {
  double d0 = 0.0;
  double d1 = 0.0;
  double f1 = 0.0;
  double sf = 0.0;
};

struct SceneFlowFields {
  ScalarField d0;  // disparity (or proxy) at the target time
  ScalarField d1;  // disparity of the target points at the source time
  FlowField flow;
};

/// |e| > 3 and |e| > 0.05 |gt|.
bool is_outlier(double error, double gt_magnitude);

/// Percentages over valid pixels. Throws DegenerateInputError for empty valid.
SceneFlowReport sceneflow_outliers(const SceneFlowFields& pred, const SceneFlowFields& gt, const BinaryMask& valid);

/// k / depth with k = fx * kDisparityBaseline; zero where depth <= 0.
ScalarField disparity_proxy(const ScalarField& depth, double fx);

/// fg = union of instance masks, bg = complement.
std::pair<BinaryMask, BinaryMask> fg_bg_split(const InstanceSet& instances, int height, int width);

std::string depth_metrics_csv(const DepthMetrics& m);
std::string depth_metrics_table(const DepthMetrics& m);
std::string flow_report_csv(const FlowReport& r);
std::string flow_report_table(const FlowReport& r);
std::string sceneflow_report_csv(const SceneFlowReport& r);
std::string sceneflow_report_table(const SceneFlowReport& r);

/// 12 significant digits; "nan" for NaN.
std::string format_number(double x);

}  // namespace do3d
