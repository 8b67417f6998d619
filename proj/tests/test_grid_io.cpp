#include <cstring>
#include <random>

#include "doctest.h"

#include "do3d/grid.hpp"
#include "do3d/image_io.hpp"

using namespace do3d;

namespace {

ScalarField ramp_2x2() {
  ScalarField f(2, 2);
  f(0, 0) = 0;
  f(0, 1) = 1;
  f(1, 0) = 2;
  f(1, 1) = 3;
  return f;
}

// Reference bilinear interpolation written against the textbook formula.
double oracle_bilinear(const ScalarField& f, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, f.width() - 1), y1 = std::min(y0 + 1, f.height() - 1);
  const double ax = x - x0, ay = y - y0;
  return f(y0, x0) * (1 - ax) * (1 - ay) + f(y0, x1) * ax * (1 - ay) + f(y1, x0) * (1 - ax) * ay +
         f(y1, x1) * ax * ay;
}

}  // namespace

TEST_CASE("bilinear sample at the cell center averages the corners") {
  const auto s = bilinear_sample(ramp_2x2(), 0.5, 0.5);
  CHECK(s.valid);
  CHECK(s.value[0] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("bilinear sample at a grid point returns the stored value") {
  const auto s = bilinear_sample(ramp_2x2(), 1.0, 0.0);
  CHECK(s.valid);
  CHECK(s.value[0] == 1.0);
}

TEST_CASE("bilinear sample out of range clamps and flags invalid") {
  const auto s = bilinear_sample(ramp_2x2(), -1.0, 0.0);
  CHECK_FALSE(s.valid);
  CHECK(s.value[0] == 0.0);
  CHECK(s.d_dx[0] == 0.0);
}

TEST_CASE("bilinear sample agrees with the reference formula and its derivatives") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> val(-3, 3);
  ScalarField f(5, 7);
  for (double& x : f.data()) x = val(rng);
  std::uniform_real_distribution<double> ux(0.0, 6.0), uy(0.0, 4.0);
  for (int i = 0; i < 200; ++i) {
    const double x = ux(rng), y = uy(rng);
    const auto s = bilinear_sample(f, x, y);
    REQUIRE(s.valid);
    CHECK(s.value[0] == doctest::Approx(oracle_bilinear(f, x, y)).epsilon(1e-12));
    if (x - std::floor(x) > 1e-3 && x - std::floor(x) < 1 - 1e-3) {
      const double h = 1e-6;
      const double fd = (oracle_bilinear(f, x + h, y) - oracle_bilinear(f, x - h, y)) / (2 * h);
      CHECK(s.d_dx[0] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("mask helpers") {
  BinaryMask a(4, 5), b(4, 5);
  a(1, 1) = 1;
  a(2, 3) = 1;
  b(2, 3) = 1;
  b(3, 0) = 1;
  CHECK(mask_count(mask_and(a, b)) == 1);
  CHECK(mask_count(mask_or(a, b)) == 3);
  const auto box = mask_bbox(a);
  REQUIRE(box.has_value());
  CHECK(*box == BBox{1, 1, 3, 2});
  CHECK_FALSE(mask_bbox(BinaryMask(3, 3)).has_value());
  const BinaryMask m = box_mask(4, 5, BBox{1, 0, 2, 1});
  CHECK(mask_count(m) == 4);
  CHECK(m(1, 2) == 1.0);
  CHECK(m(2, 2) == 0.0);
}

TEST_CASE("shape mismatches are contract errors") {
  CHECK_THROWS_AS(mask_and(BinaryMask(2, 2), BinaryMask(2, 3)), ContractError);
  CHECK_THROWS_AS(ScalarField(-1, 2), ContractError);
}

TEST_CASE("PFM round trip keeps float32 data for every channel count") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> val(-100.f, 100.f);
  ScalarField s(3, 4);
  for (double& x : s.data()) x = val(rng);
  CHECK(read_pfm<ScalarField>(write_pfm(s)) == s);
  VectorField3 v(2, 5);
  for (double& x : v.data()) x = val(rng);
  CHECK(read_pfm<VectorField3>(write_pfm(v)) == v);
  FlowField fl(2, 3);
  for (double& x : fl.data()) x = val(rng);
  CHECK(read_pfm<FlowField>(write_pfm(fl)) == fl);
}

TEST_CASE("PFM header layout: little-endian grayscale, bottom row first") {
  std::string bytes = "Pf\n2 2\n-1.0\n";
  const float rows[4] = {2.f, 3.f, 0.f, 1.f};  // bottom row (2, 3), then top row (0, 1)
  bytes.append(reinterpret_cast<const char*>(rows), sizeof(rows));
  const ScalarField f = read_pfm<ScalarField>(bytes);
  CHECK(f == ramp_2x2());
  CHECK(write_pfm(f) == bytes);
}

TEST_CASE("PFM big-endian input is accepted") {
  std::string bytes = "Pf\n1 1\n1.0\n";
  const unsigned char be[4] = {0x40, 0x49, 0x0f, 0xdb};  // 3.14159274f
  bytes.append(reinterpret_cast<const char*>(be), 4);
  CHECK(read_pfm<ScalarField>(bytes)(0, 0) == doctest::Approx(3.14159274).epsilon(1e-7));
}

TEST_CASE("PFM rejects malformed headers and short payloads") {
  CHECK_THROWS_AS(decode_pfm("Px\n2 2\n-1.0\n"), ParseError);
  CHECK_THROWS_AS(decode_pfm("Pf\n2 x\n-1.0\n"), ParseError);
  CHECK_THROWS_AS(decode_pfm(std::string("Pf\n2 2\n-1.0\n") + std::string(15, '\0')), ParseError);
  try {
    decode_pfm("Px\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 0);
  }
}

TEST_CASE("PPM encoding") {
  CHECK(write_ppm(ColorImage(2, 2)).substr(std::string("P6\n2 2\n255\n").size()) == std::string(12, '\0'));
  ColorImage one(1, 1, 1.0);
  const std::string bytes = write_ppm(one);
  CHECK(static_cast<unsigned char>(bytes.back()) == 255);
}

TEST_CASE("PPM round trip error is within half a quantization step") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  ColorImage img(6, 9);
  for (double& x : img.data()) x = val(rng);
  const ColorImage back = read_ppm(write_ppm(img));
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 1.0 / 510 + 1e-15);
}

TEST_CASE("PPM rejects other maxvals and truncated data") {
  CHECK_THROWS_AS(read_ppm("P6\n1 1\n65535\n\0\0\0\0\0\0"), ParseError);
  CHECK_THROWS_AS(read_ppm(std::string("P6\n2 1\n255\n") + std::string(5, 'a')), ParseError);
  CHECK_THROWS_AS(read_ppm("P3\n1 1\n255\n1 2 3"), ParseError);
}
