#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "do3d/errors.hpp"

namespace do3d {

struct ScalarTag {};
struct ColorTag {};
struct VectorTag {};
struct MaskTag {};
struct FlowTag {};

/// Dense row-major raster with `Channels` interleaved values per pixel.
///
/// The tag keeps semantically different rasters (a color image and a 3D
/// motion map are both three-channel) from being mixed up at compile time.
template <typename Scalar, int Channels, typename Tag>
class Grid {
 public:
  static constexpr int kChannels = Channels;
  using ScalarType = Scalar;
  using Pixel = Eigen::Matrix<Scalar, Channels, 1>;

  Grid() = default;
  Grid(int height, int width, Scalar fill = Scalar(0)) : height_(height), width_(width) {
    if (height < 0 || width < 0) throw ContractError("negative grid dimensions");
    data_.assign(static_cast<std::size_t>(height) * width * Channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return pixel_count() == 0; }
  bool in_bounds(int v, int u) const { return v >= 0 && u >= 0 && v < height_ && u < width_; }

  template <typename OtherScalar, int OtherChannels, typename OtherTag>
  bool same_shape(const Grid<OtherScalar, OtherChannels, OtherTag>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  Scalar& operator()(int v, int u, int c = 0) { return data_[index(v, u) * Channels + c]; }
  const Scalar& operator()(int v, int u, int c = 0) const {
    return data_[index(v, u) * Channels + c];
  }

  Eigen::Map<Pixel> pixel(int v, int u) { return Eigen::Map<Pixel>(&data_[index(v, u) * Channels]); }
  Eigen::Map<const Pixel> pixel(int v, int u) const {
    return Eigen::Map<const Pixel>(&data_[index(v, u) * Channels]);
  }

  /// Flat row-major pixel index.
  std::size_t index(int v, int u) const { return static_cast<std::size_t>(v) * width_ + u; }

  std::vector<Scalar>& data() { return data_; }
  const std::vector<Scalar>& data() const { return data_; }

  void fill(Scalar value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Grid& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Scalar> data_;
};

using ScalarField = Grid<double, 1, ScalarTag>;
using ColorImage = Grid<double, 3, ColorTag>;
using VectorField3 = Grid<double, 3, VectorTag>;
/// Hard masks hold 0/1; soft masks (reconstructed masks) hold values in [0,1].
using BinaryMask = Grid<double, 1, MaskTag>;
using FlowField = Grid<double, 2, FlowTag>;

/// Inclusive pixel-coordinate box.
struct BBox {
  int u_min = 0;
  int v_min = 0;
  int u_max = 0;
  int v_max = 0;

  bool operator==(const BBox&) const = default;
  bool contains(int v, int u) const { return u >= u_min && u <= u_max && v >= v_min && v <= v_max; }
};

template <typename G>
void require_same_shape(const G& a, const auto& b, const char* what) {
  if (!a.same_shape(b)) throw ContractError(std::string("dimension mismatch: ") + what);
}

/// Result of a bilinear lookup together with its spatial derivatives.
template <typename G>
struct Sample {
  typename G::Pixel value;
  /// Derivatives with respect to the sampling coordinate; zero along an
  /// axis whose coordinate was clamped to the border.
  typename G::Pixel d_dx;
  typename G::Pixel d_dy;
  bool valid = false;
};

/// Bilinear interpolation at sub-pixel (x, y) = (column, row).
///
/// Coordinates inside [0, width-1] x [0, height-1] are blended from the four
/// neighbours and flagged valid. Anything else is clamped to the border and
/// flagged invalid.
template <typename G>
Sample<G> bilinear_sample(const G& field, double x, double y) {
  using Pixel = typename G::Pixel;
  Sample<G> s;
  const int w = field.width();
  const int h = field.height();
  if (w == 0 || h == 0) throw ContractError("bilinear_sample on empty field");
  s.valid = x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1;
  const bool clamp_x = !(x >= 0.0 && x <= w - 1);
  const bool clamp_y = !(y >= 0.0 && y <= h - 1);
  const double cx = std::isnan(x) ? 0.0 : std::clamp(x, 0.0, double(w - 1));
  const double cy = std::isnan(y) ? 0.0 : std::clamp(y, 0.0, double(h - 1));
  int x0 = static_cast<int>(std::floor(cx));
  int y0 = static_cast<int>(std::floor(cy));
  if (x0 > w - 2) x0 = std::max(w - 2, 0);
  if (y0 > h - 2) y0 = std::max(h - 2, 0);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double ax = cx - x0;
  const double ay = cy - y0;

  const Pixel f00 = field.pixel(y0, x0);
  const Pixel f01 = field.pixel(y0, x1);
  const Pixel f10 = field.pixel(y1, x0);
  const Pixel f11 = field.pixel(y1, x1);
  const Pixel top = (1.0 - ax) * f00 + ax * f01;
  const Pixel bottom = (1.0 - ax) * f10 + ax * f11;
  s.value = (1.0 - ay) * top + ay * bottom;
  if (clamp_x || x1 == x0) {
    s.d_dx.setZero();
  } else {
    s.d_dx = (1.0 - ay) * (f01 - f00) + ay * (f11 - f10);
  }
  if (clamp_y || y1 == y0) {
    s.d_dy.setZero();
  } else {
    s.d_dy = bottom - top;
  }
  return s;
}

/// Number of pixels with value > 0.5.
std::size_t mask_count(const BinaryMask& mask);

/// Tight box around the set pixels, or nullopt for an empty mask.
std::optional<BBox> mask_bbox(const BinaryMask& mask);

/// Pixel-wise logical and / or of hard masks.
BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);

/// Mask with every pixel inside `box` set.
BinaryMask box_mask(int height, int width, const BBox& box);

}  // namespace do3d
