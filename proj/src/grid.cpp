#include "do3d/grid.hpp"

namespace do3d {

std::size_t mask_count(const BinaryMask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.data().begin(), mask.data().end(), [](double m) { return m > 0.5; }));
}

std::optional<BBox> mask_bbox(const BinaryMask& mask) {
  std::optional<BBox> box;
  for (int v = 0; v < mask.height(); ++v) {
    for (int u = 0; u < mask.width(); ++u) {
      if (mask(v, u) <= 0.5) continue;
      if (!box) {
        box = BBox{u, v, u, v};
      } else {
        box->u_min = std::min(box->u_min, u);
        box->u_max = std::max(box->u_max, u);
        box->v_min = std::min(box->v_min, v);
        box->v_max = std::max(box->v_max, v);
      }
    }
  }
  return box;
}

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "mask_and");
  BinaryMask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    out.data()[i] = (a.data()[i] > 0.5 && b.data()[i] > 0.5) ? 1.0 : 0.0;
  return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "mask_or");
  BinaryMask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    out.data()[i] = (a.data()[i] > 0.5 || b.data()[i] > 0.5) ? 1.0 : 0.0;
  return out;
}

BinaryMask box_mask(int height, int width, const BBox& box) {
  BinaryMask out(height, width);
  for (int v = std::max(box.v_min, 0); v <= std::min(box.v_max, height - 1); ++v)
    for (int u = std::max(box.u_min, 0); u <= std::min(box.u_max, width - 1); ++u) out(v, u) = 1.0;
  return out;
}

}  // namespace do3d
