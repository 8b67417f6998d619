#include <cmath>
#include <random>

#include "doctest.h"

#include "do3d/loss.hpp"

using namespace do3d;

namespace {

ColorImage noise_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  ColorImage img(h, w);
  for (double& x : img.data()) x = val(rng);
  return img;
}

// SSIM of one window from the textbook definition, population statistics.
double oracle_ssim_window(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx) / n;
    vy += (y[i] - my) * (y[i] - my) / n;
    cxy += (x[i] - mx) * (y[i] - my) / n;
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

int mirror(int i, int n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); }

// Scalar re-implementation of the photometric loss.
double oracle_photometric(const ColorImage& a, const ColorImage& b, double alpha) {
  double total = 0;
  for (int v = 0; v < a.height(); ++v)
    for (int u = 0; u < a.width(); ++u) {
      double ssim = 0, l1 = 0;
      for (int c = 0; c < 3; ++c) {
        std::vector<double> x, y;
        for (int dv = -1; dv <= 1; ++dv)
          for (int du = -1; du <= 1; ++du) {
            x.push_back(a(mirror(v + dv, a.height()), mirror(u + du, a.width()), c));
            y.push_back(b(mirror(v + dv, a.height()), mirror(u + du, a.width()), c));
          }
        ssim += oracle_ssim_window(x, y) / 3;
        l1 += std::abs(a(v, u, c) - b(v, u, c)) / 3;
      }
      total += alpha / 2 * (1 - ssim) + (1 - alpha) * l1;
    }
  return total / static_cast<double>(a.pixel_count());
}

}  // namespace

TEST_CASE("SSIM of an image with itself is one") {
  const ColorImage a = noise_image(6, 7, 1);
  const ScalarField s = ssim_map(a, a);
  for (double x : s.data()) CHECK(x == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("SSIM of constant 0 against constant 1 follows the definition") {
  const ScalarField s = ssim_map(ColorImage(4, 4, 0.0), ColorImage(4, 4, 1.0));
  // mu_x = 0, mu_y = 1, all variances zero: C1 * C2 / ((1 + C1) * C2)
  const double expected = kSsimC1 / (1.0 + kSsimC1);
  for (double x : s.data()) CHECK(x == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("property: SSIM is symmetric") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ColorImage a = noise_image(5, 6, 10 + seed), b = noise_image(5, 6, 20 + seed);
    const ScalarField ab = ssim_map(a, b), ba = ssim_map(b, a);
    for (std::size_t i = 0; i < ab.pixel_count(); ++i) CHECK(ab.data()[i] == doctest::Approx(ba.data()[i]).epsilon(1e-14));
  }
}

TEST_CASE("photometric loss basics") {
  const ColorImage a = noise_image(5, 6, 2);
  const BinaryMask all(5, 6, 1.0);
  CHECK(photometric_loss(a, a, all, 0.85) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(photometric_loss(ColorImage(3, 3, 0.0), ColorImage(3, 3, 0.5), BinaryMask(3, 3, 1.0), 0.0) == 0.5);
  CHECK(photometric_loss(a, a, all, 1.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK_THROWS_AS(photometric_loss(a, a, BinaryMask(5, 6), 0.85), DegenerateInputError);
}

TEST_CASE("photometric loss matches a scalar re-implementation") {
  for (double alpha : {1.0, 0.85, 0.3}) {
    const ColorImage a = noise_image(7, 9, 3), b = noise_image(7, 9, 4);
    CHECK(photometric_loss(a, b, BinaryMask(7, 9, 1.0), alpha) ==
          doctest::Approx(oracle_photometric(a, b, alpha)).epsilon(1e-12));
  }
}

TEST_CASE("property: photometric gradient matches central differences") {
  const ColorImage a = noise_image(6, 7, 5), b = noise_image(6, 7, 6);
  BinaryMask valid(6, 7, 1.0);
  valid(2, 3) = 0.0;
  const PhotometricGradient g = photometric_loss_with_gradient(a, b, valid, 0.85);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, a.data().size() - 1);
  const double h = 1e-7;
  for (int k = 0; k < 40; ++k) {
    const std::size_t i = pick(rng);
    ColorImage ap = a, am = a;
    ap.data()[i] += h;
    am.data()[i] -= h;
    const double fd = (photometric_loss(ap, b, valid, 0.85) - photometric_loss(am, b, valid, 0.85)) / (2 * h);
    CHECK(g.d_pred.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("smoothness of constant depth is zero") {
  CHECK(smoothness_loss(ScalarField(4, 5, 3.0), noise_image(4, 5, 1)) == 0.0);
}

TEST_CASE("smoothness on a 1x4 ramp with a flat image") {
  ScalarField d(1, 4);
  for (int u = 0; u < 4; ++u) d(0, u) = u + 1.0;
  // Inverse depth 1, 1/2, 1/3, 1/4 normalized by its mean 25/48.
  const double mean = (1.0 + 0.5 + 1.0 / 3 + 0.25) / 4;
  const double expected = ((1.0 - 0.5) + (0.5 - 1.0 / 3) + (1.0 / 3 - 0.25)) / 3 / mean;
  CHECK(smoothness_loss(d, ColorImage(1, 4, 0.4)) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected > 0);
}

TEST_CASE("image edges discount collocated depth edges") {
  ScalarField d(3, 6, 5.0);
  ColorImage flat(3, 6, 0.5), edge(3, 6, 0.1);
  for (int v = 0; v < 3; ++v)
    for (int u = 3; u < 6; ++u) {
      d(v, u) = 10.0;
      edge.pixel(v, u).setConstant(0.9);
    }
  CHECK(smoothness_loss(d, edge) < smoothness_loss(d, flat));
}

TEST_CASE("property: smoothness is invariant to global depth scale") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dd(1.0, 50.0), ss(0.01, 100.0);
  for (int trial = 0; trial < 20; ++trial) {
    ScalarField d(6, 8);
    for (double& x : d.data()) x = dd(rng);
    const ColorImage img = noise_image(6, 8, 100 + trial);
    ScalarField scaled = d;
    const double s = ss(rng);
    for (double& x : scaled.data()) x *= s;
    CHECK(std::abs(smoothness_loss(scaled, img) - smoothness_loss(d, img)) < 1e-12);
  }
}

TEST_CASE("property: smoothness gradient matches central differences") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> dd(2.0, 20.0);
  ScalarField d(5, 6);
  for (double& x : d.data()) x = dd(rng);
  const ColorImage img = noise_image(5, 6, 13);
  const SmoothnessGradient g = smoothness_loss_with_gradient(d, img);
  for (std::size_t i = 0; i < d.pixel_count(); ++i) {
    const double h = 1e-6 * d.data()[i];
    ScalarField p = d, m = d;
    p.data()[i] += h;
    m.data()[i] -= h;
    const double fd = (smoothness_loss(p, img) - smoothness_loss(m, img)) / (2 * h);
    CHECK(g.d_depth.data()[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-7));
  }
  ScalarField bad = d;
  bad(1, 1) = 0.0;
  CHECK_THROWS_AS(smoothness_loss(bad, img), DomainError);
}

TEST_CASE("mask loss values") {
  BinaryMask m(4, 4), other(4, 4);
  m(1, 1) = m(1, 2) = 1.0;
  other(3, 3) = 1.0;
  CHECK(mask_loss(m, m) == 0.0);
  CHECK(mask_loss(other, m) == 1.0);
  BinaryMask half = m;
  for (double& x : half.data()) x *= 0.5;
  CHECK(mask_loss(half, m) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mask_loss(BinaryMask(4, 4), BinaryMask(4, 4)) == 0.0);
}

TEST_CASE("property: mask loss stays in [0, 1] for soft masks") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    BinaryMask a(5, 5), b(5, 5);
    for (double& x : a.data()) x = val(rng);
    for (double& x : b.data()) x = val(rng) < 0.5 ? 1.0 : 0.0;
    const double l = mask_loss(a, b);
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
  }
}

TEST_CASE("total loss weighting") {
  const LossWeights w;
  CHECK(total_loss(LossComponents{}, w) == 0.0);
  CHECK(total_loss(LossComponents{1.0, 1.0, 1.0}, w) == doctest::Approx(2.001).epsilon(1e-15));
  CHECK(total_loss(LossComponents{3.0, 7.0, 2.0}, LossWeights{0.0, 0.0, 0.0, 0.85}) == 0.0);
  CHECK_THROWS_AS((LossWeights{1.0, -1.0, 1.0, 0.85}.validate()), DomainError);
  CHECK_THROWS_AS((LossWeights{1.0, 1.0, 1.0, 1.5}.validate()), DomainError);
}

TEST_CASE("SSIM support mask erodes by the window") {
  BinaryMask m(5, 5, 1.0);
  m(2, 2) = 0.0;
  const BinaryMask s = ssim_support_mask(m);
  CHECK(mask_count(s) == 25 - 9);
  CHECK(mask_count(ssim_support_mask(BinaryMask(4, 4, 1.0))) == 16);
}
