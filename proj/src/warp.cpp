#include "do3d/warp.hpp"

#include <cmath>
#include <limits>

#include "do3d/parallel.hpp"

namespace do3d {
namespace {

// Round-off can leave an exact border projection a few ulps outside.
double snap_to_range(double x, double hi) {
  constexpr double tol = 1e-9;
  if (x < 0.0 && x > -tol) return 0.0;
  if (x > hi && x < hi + tol) return hi;
  return x;
}

CorrespondenceMap correspondence_impl(const ScalarField& depth_t, const Intrinsics& K, const PoseSE3& T,
                                      const VectorField3* motion) {
  K.validate();
  if (motion != nullptr) require_same_shape(depth_t, *motion, "depth vs motion map");
  const int h = depth_t.height();
  const int w = depth_t.width();
  CorrespondenceMap c{ScalarField(h, w), ScalarField(h, w), ScalarField(h, w), BinaryMask(h, w)};
  parallel_rows(h, [&](int v) {
    for (int u = 0; u < w; ++u) {
      c.u_s(v, u) = u;
      c.v_s(v, u) = v;
      const double d = depth_t(v, u);
      if (!(d > 0.0)) continue;
      Eigen::Vector3d x = backproject_ray<double>(K, u, v, d);
      if (motion != nullptr) x += motion->pixel(v, u);
      const Eigen::Vector3d xs = transform(T, x);
      double us = 0.0, vs = 0.0;
      if (!project_point(K, xs, us, vs)) continue;
      us = snap_to_range(us, w - 1);
      vs = snap_to_range(vs, h - 1);
      c.u_s(v, u) = us;
      c.v_s(v, u) = vs;
      c.d_s(v, u) = xs.z();
      const bool inside = us >= 0.0 && vs >= 0.0 && us <= w - 1 && vs <= h - 1;
      c.valid(v, u) = inside ? 1.0 : 0.0;
    }
  });
  return c;
}

}  // namespace

CorrespondenceMap project_correspondence(const ScalarField& depth_t, const Intrinsics& K, const PoseSE3& T) {
  return correspondence_impl(depth_t, K, T, nullptr);
}

CorrespondenceMap project_correspondence(const ScalarField& depth_t, const Intrinsics& K, const PoseSE3& T,
                                         const VectorField3& motion) {
  return correspondence_impl(depth_t, K, T, &motion);
}

SplatResult forward_splat(const ScalarField& depth_s, const Intrinsics& K, const PoseSE3& T_inv) {
  K.validate();
  const int h = depth_s.height();
  const int w = depth_s.width();
  SplatResult out{ScalarField(h, w, std::numeric_limits<double>::infinity()),
                  Grid<int, 1, ScalarTag>(h, w, -1), BinaryMask(h, w)};
  // Sequential in row-major source order so the tie rule is deterministic.
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double d = depth_s(v, u);
      if (!(d > 0.0)) continue;
      const Eigen::Vector3d x = transform(T_inv, backproject_ray<double>(K, u, v, d));
      double ut = 0.0, vt = 0.0;
      if (!project_point(K, x, ut, vt)) continue;
      const long iu = std::lround(ut);
      const long iv = std::lround(vt);
      if (iu < 0 || iv < 0 || iu >= w || iv >= h) continue;
      if (x.z() < out.depth(iv, iu)) {
        out.depth(iv, iu) = x.z();
        out.source_index(iv, iu) = static_cast<int>(depth_s.index(v, u));
        out.hit(iv, iu) = 1.0;
      }
    }
  }
  return out;
}

BinaryMask forward_splat_mask(const ScalarField& depth_s, const Intrinsics& K, const PoseSE3& T_inv) {
  return forward_splat(depth_s, K, T_inv).hit;
}

VectorField3 correspondence_field(const CorrespondenceMap& corr) {
  VectorField3 out(corr.height(), corr.width());
  for (int v = 0; v < corr.height(); ++v)
    for (int u = 0; u < corr.width(); ++u)
      out.pixel(v, u) = Eigen::Vector3d(corr.u_s(v, u), corr.v_s(v, u), corr.d_s(v, u));
  return out;
}

}  // namespace do3d
