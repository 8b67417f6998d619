#include <cmath>
#include <random>

#include "doctest.h"

#include "do3d/metrics.hpp"

using namespace do3d;

namespace {

ScalarField row(std::initializer_list<double> values) {
  ScalarField f(1, static_cast<int>(values.size()));
  int u = 0;
  for (double x : values) f(0, u++) = x;
  return f;
}

ScalarField random_depth(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dd(1.0, 60.0);
  ScalarField f(h, w);
  for (double& x : f.data()) x = dd(rng);
  return f;
}

}  // namespace

TEST_CASE("depth metrics on a three-pixel example") {
  const ScalarField gt = row({1, 2, 4}), pred = row({2, 2, 4});
  const BinaryMask all(1, 3, 1.0);
  for (bool scaled : {false, true}) {
    const DepthMetrics m = depth_metrics(pred, gt, all, scaled);
    CHECK(m.scale == 1.0);
    CHECK(m.abs_rel == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(m.sq_rel == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(m.rmse == doctest::Approx(std::sqrt(1.0 / 3)).epsilon(1e-15));
    CHECK(m.rmse_log == doctest::Approx(std::log(2.0) / std::sqrt(3.0)).epsilon(1e-14));
    CHECK(m.delta1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(m.delta3 == doctest::Approx(2.0 / 3).epsilon(1e-15));
  }
}

TEST_CASE("perfect and globally scaled predictions") {
  std::mt19937_64 rng(1);
  ScalarField gt = random_depth(8, 9, rng);
  for (double& x : gt.data()) x *= 0.5;  // keep 2 * gt under the cap
  const BinaryMask all(8, 9, 1.0);
  ScalarField twice = gt;
  for (double& x : twice.data()) x *= 2.0;
  for (const ScalarField* pred : {static_cast<const ScalarField*>(&gt), static_cast<const ScalarField*>(&twice)}) {
    const DepthMetrics m = depth_metrics(*pred, gt, all, true);
    CHECK(m.abs_rel < 1e-15);
    CHECK(m.rmse < 1e-13);
    CHECK(m.rmse_log < 1e-15);
    CHECK(m.delta1 == 1.0);
  }
  CHECK(depth_metrics(twice, gt, all, true).scale == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(depth_metrics(twice, gt, all, false).abs_rel == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("depth metrics cap both maps and respect the mask") {
  const ScalarField gt = row({100, 10}), pred = row({90, 10});
  CHECK(depth_metrics(pred, gt, BinaryMask(1, 2, 1.0), false).abs_rel == 0.0);
  BinaryMask only_first(1, 2);
  only_first(0, 0) = 1.0;
  CHECK(depth_metrics(row({5, 1}), row({10, 1}), only_first, false).abs_rel == 0.5);
}

TEST_CASE("depth metric errors") {
  CHECK_THROWS_AS(depth_metrics(row({1, 2}), row({1, 2}), BinaryMask(1, 2), true), DegenerateInputError);
  CHECK_THROWS_AS(depth_metrics(row({0, 0, 1}), row({1, 2, 3}), BinaryMask(1, 3, 1.0), true), DegenerateInputError);
}

TEST_CASE("property: median scaling makes metrics scale invariant") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> kk(0.01, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ScalarField gt = random_depth(6, 7, rng), pred = random_depth(6, 7, rng);
    ScalarField scaled = pred;
    const double k = kk(rng);
    for (double& x : scaled.data()) x *= k;
    const BinaryMask all(6, 7, 1.0);
    const DepthMetrics a = depth_metrics(pred, gt, all, true), b = depth_metrics(scaled, gt, all, true);
    CHECK(std::abs(a.abs_rel - b.abs_rel) < 1e-12);
    CHECK(std::abs(a.sq_rel - b.sq_rel) < 1e-12);
    CHECK(std::abs(a.rmse - b.rmse) < 1e-12);
    CHECK(std::abs(a.rmse_log - b.rmse_log) < 1e-12);
    CHECK(a.delta1 == b.delta1);
  }
}

TEST_CASE("property: deltas are ordered fractions and errors are non-negative") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const DepthMetrics m = depth_metrics(random_depth(5, 5, rng), random_depth(5, 5, rng), BinaryMask(5, 5, 1.0), trial % 2);
    CHECK(m.abs_rel >= 0.0);
    CHECK(m.sq_rel >= 0.0);
    CHECK(m.rmse >= 0.0);
    CHECK(m.rmse_log >= 0.0);
    CHECK(0.0 <= m.delta1);
    CHECK(m.delta1 <= m.delta2);
    CHECK(m.delta2 <= m.delta3);
    CHECK(m.delta3 <= 1.0);
  }
}

TEST_CASE("masked median") {
  CHECK(masked_median(row({5, 1, 3}), BinaryMask(1, 3, 1.0)) == 3.0);
  CHECK(masked_median(row({4, 1, 3, 2}), BinaryMask(1, 4, 1.0)) == 2.5);
  BinaryMask m(1, 4);
  m(0, 0) = 1.0;
  CHECK(masked_median(row({4, 1, 3, 2}), m) == 4.0);
}

TEST_CASE("flow EPE regions") {
  const int h = 4, w = 5;
  FlowField gt(h, w), pred(h, w);
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    gt.data()[2 * i] = 1.0;
    pred.data()[2 * i] = 4.0;
    pred.data()[2 * i + 1] = 4.0;
  }
  const BinaryMask valid(h, w, 1.0), noc(h, w, 1.0);
  BinaryMask fg(h, w);
  fg(1, 1) = 1.0;
  const FlowReport same = flow_epe(gt, gt, valid, noc, fg);
  CHECK(*same.noc_all == 0.0);
  CHECK(*same.occ_fg == 0.0);
  const FlowReport r = flow_epe(pred, gt, valid, noc, fg);
  for (const auto& e : {r.noc_bg, r.noc_fg, r.noc_all, r.occ_bg, r.occ_fg, r.occ_all}) CHECK(*e == 5.0);
  CHECK(r.noc_fg_count == 1);
  CHECK(r.noc_bg_count == 19);
  const FlowReport no_fg = flow_epe(pred, gt, valid, noc, BinaryMask(h, w));
  CHECK_FALSE(no_fg.noc_fg.has_value());
  CHECK(*no_fg.noc_all == 5.0);
}

TEST_CASE("property: EPE over all pixels is the count-weighted mean of fg and bg") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::bernoulli_distribution coin(0.3), mostly(0.8);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 9, w = 11;
    FlowField a(h, w), b(h, w);
    for (double& x : a.data()) x = 3 * n01(rng);
    for (double& x : b.data()) x = 3 * n01(rng);
    BinaryMask valid(h, w), noc(h, w), fg(h, w);
    for (std::size_t i = 0; i < valid.pixel_count(); ++i) {
      valid.data()[i] = mostly(rng);
      noc.data()[i] = valid.data()[i] * mostly(rng);
      fg.data()[i] = coin(rng);
    }
    const FlowReport r = flow_epe(a, b, valid, noc, fg);
    // Brute-force sum over Noc pixels.
    double sum = 0.0;
    std::size_t n = 0;
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        if (noc(v, u) > 0.5) {
          sum += std::hypot(a(v, u, 0) - b(v, u, 0), a(v, u, 1) - b(v, u, 1));
          ++n;
        }
    REQUIRE(r.noc_bg.has_value());
    REQUIRE(r.noc_fg.has_value());
    const double weighted =
        (r.noc_bg_count * *r.noc_bg + r.noc_fg_count * *r.noc_fg) / static_cast<double>(r.noc_bg_count + r.noc_fg_count);
    CHECK(*r.noc_all == doctest::Approx(sum / n).epsilon(1e-13));
    CHECK(*r.noc_all == doctest::Approx(weighted).epsilon(1e-13));
    CHECK(r.occ_bg_count + r.occ_fg_count >= r.noc_bg_count + r.noc_fg_count);
  }
}

TEST_CASE("outlier rule requires both thresholds") {
  CHECK(is_outlier(4.0, 10.0));
  CHECK_FALSE(is_outlier(4.0, 100.0));
  CHECK_FALSE(is_outlier(2.9, 1.0));
  CHECK_FALSE(is_outlier(3.0, 10.0));
}

TEST_CASE("scene-flow outlier percentages") {
  const int h = 2, w = 5;
  SceneFlowFields gt{ScalarField(h, w, 50.0), ScalarField(h, w, 40.0), FlowField(h, w)};
  for (std::size_t i = 0; i < gt.flow.pixel_count(); ++i) gt.flow.data()[2 * i] = 10.0;
  CHECK(sceneflow_outliers(gt, gt, BinaryMask(h, w, 1.0)).sf == 0.0);

  SceneFlowFields pred = gt;
  pred.flow(0, 0, 0) = 14.0;  // F1 outlier
  pred.d0(0, 1) = 60.0;       // D0 outlier
  pred.d1(0, 1) = 30.0;       // D1 outlier on the same pixel
  pred.d1(1, 4) = 42.0;       // within thresholds
  const SceneFlowReport r = sceneflow_outliers(pred, gt, BinaryMask(h, w, 1.0));
  CHECK(r.f1 == 10.0);
  CHECK(r.d0 == 10.0);
  CHECK(r.d1 == 10.0);
  CHECK(r.sf == 20.0);
  CHECK_THROWS_AS(sceneflow_outliers(pred, gt, BinaryMask(h, w)), DegenerateInputError);
}

TEST_CASE("property: SF rate dominates each channel") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dd(1.0, 80.0), ff(-40.0, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    SceneFlowFields a{ScalarField(6, 6), ScalarField(6, 6), FlowField(6, 6)};
    SceneFlowFields b = a;
    for (auto* f : {&a, &b}) {
      for (double& x : f->d0.data()) x = dd(rng);
      for (double& x : f->d1.data()) x = dd(rng);
      for (double& x : f->flow.data()) x = ff(rng);
    }
    const SceneFlowReport r = sceneflow_outliers(a, b, BinaryMask(6, 6, 1.0));
    CHECK(r.sf >= std::max({r.d0, r.d1, r.f1}));
    CHECK(r.sf <= 100.0);
    CHECK(r.sf <= r.d0 + r.d1 + r.f1 + 1e-12);
  }
}

TEST_CASE("disparity proxy") {
  const ScalarField d = disparity_proxy(row({10.0, 0.0, 54.0}), 100.0);
  CHECK(d(0, 0) == doctest::Approx(5.4).epsilon(1e-15));
  CHECK(d(0, 1) == 0.0);
  CHECK(d(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("foreground and background split") {
  const auto [fg0, bg0] = fg_bg_split({}, 3, 4);
  CHECK(mask_count(fg0) == 0);
  CHECK(mask_count(bg0) == 12);
  const InstanceSet one{Instance{1, box_mask(3, 4, BBox{0, 0, 1, 1}), BBox{0, 0, 1, 1}}};
  CHECK(fg_bg_split(one, 3, 4).first == one[0].mask);
  const InstanceSet two{one[0], Instance{2, box_mask(3, 4, BBox{1, 1, 2, 2}), BBox{1, 1, 2, 2}}};
  const auto [fg, bg] = fg_bg_split(two, 3, 4);
  CHECK(mask_count(fg) == 7);
  CHECK(mask_count(bg) == 5);
  CHECK(mask_count(mask_and(fg, bg)) == 0);
}

TEST_CASE("report formatting") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(1.0 / 3) == "0.333333333333");
  const FlowReport r = flow_epe(FlowField(2, 2), FlowField(2, 2), BinaryMask(2, 2, 1.0), BinaryMask(2, 2, 1.0),
                                BinaryMask(2, 2));
  const std::string csv = flow_report_csv(r);
  CHECK(csv.find("noc") != std::string::npos);
  CHECK(depth_metrics_csv(DepthMetrics{}).find("abs_rel") != std::string::npos);
}
