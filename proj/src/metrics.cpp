#include "do3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "do3d/errors.hpp"
#include "do3d/parallel.hpp"

namespace do3d {

double masked_median(const ScalarField& field, const BinaryMask& mask) {
  require_same_shape(field, mask, "masked_median");
  std::vector<double> vals;
  for (std::size_t i = 0; i < field.pixel_count(); ++i)
    if (mask.data()[i] > 0.5) vals.push_back(field.data()[i]);
  if (vals.empty()) throw DegenerateInputError("median over an empty mask");
  const std::size_t mid = vals.size() / 2;
  std::nth_element(vals.begin(), vals.begin() + mid, vals.end());
  const double upper = vals[mid];
  if (vals.size() % 2 == 1) return upper;
  const double lower = *std::max_element(vals.begin(), vals.begin() + mid);
  return 0.5 * (lower + upper);
}

DepthMetrics depth_metrics(const ScalarField& pred, const ScalarField& gt, const BinaryMask& valid, bool median_scale,
                           double cap) {
  require_same_shape(pred, gt, "depth_metrics pred vs gt");
  require_same_shape(pred, valid, "depth_metrics valid");
  if (mask_count(valid) == 0) throw DegenerateInputError("depth_metrics: empty valid mask");
  DepthMetrics m;
  if (median_scale) {
    const double mp = masked_median(pred, valid);
    if (mp == 0.0) throw DegenerateInputError("depth_metrics: median prediction is zero");
    m.scale = masked_median(gt, valid) / mp;
  }
  std::vector<double> abs_rel, sq_rel, sq, sq_log, d1, d2, d3;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    if (valid.data()[i] <= 0.5) continue;
    const double g0 = gt.data()[i];
    if (!(g0 > 0.0)) throw DomainError("depth_metrics: ground truth must be positive on valid pixels");
    const double p = std::clamp(pred.data()[i] * m.scale, kDepthFloor, cap);
    const double g = std::clamp(g0, kDepthFloor, cap);
    const double diff = p - g;
    abs_rel.push_back(std::abs(diff) / g);
    sq_rel.push_back(diff * diff / g);
    sq.push_back(diff * diff);
    const double dl = std::log(p) - std::log(g);
    sq_log.push_back(dl * dl);
    const double ratio = std::max(p / g, g / p);
    d1.push_back(ratio < 1.25 ? 1.0 : 0.0);
    d2.push_back(ratio < 1.25 * 1.25 ? 1.0 : 0.0);
    d3.push_back(ratio < 1.25 * 1.25 * 1.25 ? 1.0 : 0.0);
  }
  const double n = static_cast<double>(abs_rel.size());
  m.abs_rel = pairwise_sum(abs_rel) / n;
  m.sq_rel = pairwise_sum(sq_rel) / n;
  m.rmse = std::sqrt(pairwise_sum(sq) / n);
  m.rmse_log = std::sqrt(pairwise_sum(sq_log) / n);
  m.delta1 = pairwise_sum(d1) / n;
  m.delta2 = pairwise_sum(d2) / n;
  m.delta3 = pairwise_sum(d3) / n;
  return m;
}

FlowReport flow_epe(const FlowField& pred, const FlowField& gt, const BinaryMask& valid, const BinaryMask& noc,
                    const BinaryMask& fg) {
  require_same_shape(pred, gt, "flow_epe pred vs gt");
  require_same_shape(pred, valid, "flow_epe valid");
  require_same_shape(pred, noc, "flow_epe noc");
  require_same_shape(pred, fg, "flow_epe fg");
  std::vector<double> noc_bg, noc_fg, occ_bg, occ_fg;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    if (valid.data()[i] <= 0.5) continue;
    const double e = std::hypot(pred.data()[2 * i] - gt.data()[2 * i], pred.data()[2 * i + 1] - gt.data()[2 * i + 1]);
    const bool is_fg = fg.data()[i] > 0.5;
    (is_fg ? occ_fg : occ_bg).push_back(e);
    if (noc.data()[i] > 0.5) (is_fg ? noc_fg : noc_bg).push_back(e);
  }
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    return pairwise_sum(v) / static_cast<double>(v.size());
  };
  auto mean2 = [](const std::vector<double>& a, const std::vector<double>& b) -> std::optional<double> {
    if (a.empty() && b.empty()) return std::nullopt;
    return (pairwise_sum(a) + pairwise_sum(b)) / static_cast<double>(a.size() + b.size());
  };
  FlowReport r;
  r.noc_bg = mean(noc_bg);
  r.noc_fg = mean(noc_fg);
  r.noc_all = mean2(noc_bg, noc_fg);
  r.occ_bg = mean(occ_bg);
  r.occ_fg = mean(occ_fg);
  r.occ_all = mean2(occ_bg, occ_fg);
  r.noc_bg_count = noc_bg.size();
  r.noc_fg_count = noc_fg.size();
  r.occ_bg_count = occ_bg.size();
  r.occ_fg_count = occ_fg.size();
  return r;
}

bool is_outlier(double error, double gt_magnitude) { return error > 3.0 && error > 0.05 * gt_magnitude; }

SceneFlowReport sceneflow_outliers(const SceneFlowFields& pred, const SceneFlowFields& gt, const BinaryMask& valid) {
  require_same_shape(pred.d0, gt.d0, "sceneflow d0");
  require_same_shape(pred.d1, gt.d1, "sceneflow d1");
  require_same_shape(pred.flow, gt.flow, "sceneflow flow");
  require_same_shape(pred.d0, valid, "sceneflow valid");
  std::size_t n = 0, o0 = 0, o1 = 0, of = 0, osf = 0;
  for (std::size_t i = 0; i < valid.pixel_count(); ++i) {
    if (valid.data()[i] <= 0.5) continue;
    ++n;
    const bool b0 = is_outlier(std::abs(pred.d0.data()[i] - gt.d0.data()[i]), std::abs(gt.d0.data()[i]));
    const bool b1 = is_outlier(std::abs(pred.d1.data()[i] - gt.d1.data()[i]), std::abs(gt.d1.data()[i]));
    const double gx = gt.flow.data()[2 * i], gy = gt.flow.data()[2 * i + 1];
    const bool bf = is_outlier(std::hypot(pred.flow.data()[2 * i] - gx, pred.flow.data()[2 * i + 1] - gy),
                               std::hypot(gx, gy));
    o0 += b0;
    o1 += b1;
    of += bf;
    osf += (b0 || b1 || bf);
  }
  if (n == 0) throw DegenerateInputError("sceneflow_outliers: empty valid mask");
  const double scale = 100.0 / static_cast<double>(n);
  return SceneFlowReport{o0 * scale, o1 * scale, of * scale, osf * scale};
}

ScalarField disparity_proxy(const ScalarField& depth, double fx) {
  ScalarField out(depth.height(), depth.width());
  const double k = fx * kDisparityBaseline;
  for (std::size_t i = 0; i < depth.pixel_count(); ++i)
    out.data()[i] = depth.data()[i] > 0.0 ? k / depth.data()[i] : 0.0;
  return out;
}

std::pair<BinaryMask, BinaryMask> fg_bg_split(const InstanceSet& instances, int height, int width) {
  BinaryMask fg = instance_union(instances, height, width);
  BinaryMask bg(height, width);
  for (std::size_t i = 0; i < fg.pixel_count(); ++i) bg.data()[i] = fg.data()[i] > 0.5 ? 0.0 : 1.0;
  return {fg, bg};
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

namespace {

std::string opt_number(const std::optional<double>& x) { return x ? format_number(*x) : "absent"; }

std::string cell(const std::string& s, int width) {
  return s.size() >= static_cast<std::size_t>(width) ? s + " " : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string depth_metrics_csv(const DepthMetrics& m) {
  return "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,scale\n" + format_number(m.abs_rel) + "," +
         format_number(m.sq_rel) + "," + format_number(m.rmse) + "," + format_number(m.rmse_log) + "," +
         format_number(m.delta1) + "," + format_number(m.delta2) + "," + format_number(m.delta3) + "," +
         format_number(m.scale) + "\n";
}

std::string depth_metrics_table(const DepthMetrics& m) {
  std::string out;
  for (const char* h : {"Abs Rel", "Sq Rel", "RMSE", "RMSE log", "d<1.25", "d<1.25^2", "d<1.25^3"}) out += cell(h, 12);
  out += "\n";
  for (double v : {m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3}) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    out += cell(buf, 12);
  }
  return out + "\n";
}

std::string flow_report_csv(const FlowReport& r) {
  return "region,bg,fg,all\nnoc," + opt_number(r.noc_bg) + "," + opt_number(r.noc_fg) + "," + opt_number(r.noc_all) +
         "\nocc," + opt_number(r.occ_bg) + "," + opt_number(r.occ_fg) + "," + opt_number(r.occ_all) + "\n";
}

std::string flow_report_table(const FlowReport& r) {
  auto fmt = [](const std::optional<double>& x) {
    if (!x) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *x);
    return std::string(buf);
  };
  std::string out = cell("", 6) + cell("bg", 10) + cell("fg", 10) + cell("all", 10) + "\n";
  out += cell("Noc", 6) + cell(fmt(r.noc_bg), 10) + cell(fmt(r.noc_fg), 10) + cell(fmt(r.noc_all), 10) + "\n";
  out += cell("Occ", 6) + cell(fmt(r.occ_bg), 10) + cell(fmt(r.occ_fg), 10) + cell(fmt(r.occ_all), 10) + "\n";
  return out;
}

std::string sceneflow_report_csv(const SceneFlowReport& r) {
  return "D0,D1,F1,SF\n" + format_number(r.d0) + "," + format_number(r.d1) + "," + format_number(r.f1) + "," +
         format_number(r.sf) + "\n";
}

std::string sceneflow_report_table(const SceneFlowReport& r) {
  std::string out = cell("D0", 10) + cell("D1", 10) + cell("F1", 10) + cell("SF", 10) + "\n";
  for (double v : {r.d0, r.d1, r.f1, r.sf}) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    out += cell(buf, 10);
  }
  return out + "\n";
}

}  // namespace do3d
