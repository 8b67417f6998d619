#pragma once

#include "do3d/camera.hpp"
#include "do3d/grid.hpp"

namespace do3d {

/// Per target pixel: sub-pixel source coordinates and projected source depth.
/// `valid` is 0 where the projection failed (coordinates hold the target
/// pixel, d_s is 0) or landed out of bounds (coordinates kept).
struct CorrespondenceMap {
  ScalarField u_s;
  ScalarField v_s;
  ScalarField d_s;
  BinaryMask valid;

  int height() const { return u_s.height(); }
  int width() const { return u_s.width(); }
};

/// d_s p_s = K T (d_t K^-1 p_t + M(p_t)) for every target pixel.
CorrespondenceMap project_correspondence(const ScalarField& depth_t, const Intrinsics& K,
                                         const PoseSE3& T);
CorrespondenceMap project_correspondence(const ScalarField& depth_t, const Intrinsics& K,
                                         const PoseSE3& T, const VectorField3& motion);

template <typename G>
struct WarpResult {
  G image;
  BinaryMask valid;
};

/// Reconstructs the target frame by bilinear sampling of `source` at the
/// correspondence coordinates.
template <typename G>
WarpResult<G> inverse_warp(const G& source, const CorrespondenceMap& corr) {
  require_same_shape(source, corr.u_s, "inverse_warp source vs correspondence");
  WarpResult<G> out{G(corr.height(), corr.width()), BinaryMask(corr.height(), corr.width())};
  for (int v = 0; v < corr.height(); ++v) {
    for (int u = 0; u < corr.width(); ++u) {
      const auto s = bilinear_sample(source, corr.u_s(v, u), corr.v_s(v, u));
      out.image.pixel(v, u) = s.value;
      out.valid(v, u) = (corr.valid(v, u) > 0.5 && s.valid) ? 1.0 : 0.0;
    }
  }
  return out;
}

/// Nearest-pixel forward splat with a z-buffer (closest depth wins, ties go
/// to the lowest row-major source index).
struct SplatResult {
  ScalarField depth;       // +inf where nothing landed
  Grid<int, 1, ScalarTag> source_index;  // -1 where nothing landed
  BinaryMask hit;
};

/// Forward-projects every source pixel with `T_inv` (source -> target).
SplatResult forward_splat(const ScalarField& depth_s, const Intrinsics& K, const PoseSE3& T_inv);
BinaryMask forward_splat_mask(const ScalarField& depth_s, const Intrinsics& K, const PoseSE3& T_inv);

/// (u_s, v_s, d_s) as a three-channel field for PFM export.
VectorField3 correspondence_field(const CorrespondenceMap& corr);

}  // namespace do3d
