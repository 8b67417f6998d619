#include "do3d/motion.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "do3d/loss.hpp"

namespace do3d {

void validate_instances(const InstanceSet& instances, int height, int width) {
  std::set<int> ids;
  for (const Instance& inst : instances) {
    if (!ids.insert(inst.id).second) throw ContractError("duplicate instance id " + std::to_string(inst.id));
    if (inst.mask.height() != height || inst.mask.width() != width)
      throw ContractError("instance " + std::to_string(inst.id) + " mask has wrong dimensions");
  }
}

InstanceSet instances_from_id_map(const ScalarField& ids) {
  std::map<int, BinaryMask> masks;
  for (int v = 0; v < ids.height(); ++v) {
    for (int u = 0; u < ids.width(); ++u) {
      const int id = static_cast<int>(std::lround(ids(v, u)));
      if (id == 0) continue;
      auto [it, inserted] = masks.try_emplace(id, ids.height(), ids.width());
      it->second(v, u) = 1.0;
    }
  }
  InstanceSet out;
  for (auto& [id, mask] : masks) {
    const BBox box = mask_bbox(mask).value();
    out.push_back(Instance{id, std::move(mask), box});
  }
  return out;
}

ScalarField id_map_from_instances(const InstanceSet& instances, int height, int width) {
  ScalarField out(height, width);
  for (const Instance& inst : instances)
    for (std::size_t i = 0; i < out.pixel_count(); ++i)
      if (inst.mask.data()[i] > 0.5 && out.data()[i] == 0.0) out.data()[i] = inst.id;
  return out;
}

BinaryMask instance_union(const InstanceSet& instances, int height, int width) {
  BinaryMask out(height, width);
  for (const Instance& inst : instances) out = mask_or(out, inst.mask);
  return out;
}

BBox enlarge_bbox(const BBox& box, int height, int width, int margin) {
  return BBox{std::max(box.u_min - margin, 0), std::max(box.v_min - margin, 0),
              std::min(box.u_max + margin, width - 1), std::min(box.v_max + margin, height - 1)};
}

VectorField3 backproject_depth(const Intrinsics& K, const ScalarField& depth) {
  VectorField3 out(depth.height(), depth.width());
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) out.pixel(v, u) = backproject(K, u, v, depth(v, u));
  return out;
}

VectorField3 compose_object_motion(const VectorField3& points, const InstanceSet& instances,
                                   const std::vector<RigidMotion6DoF>& rigids, const VectorField3& deformation) {
  require_same_shape(points, deformation, "points vs deformation");
  validate_instances(instances, points.height(), points.width());
  std::map<int, PoseSE3> poses;
  for (const RigidMotion6DoF& r : rigids) {
    const bool known = std::any_of(instances.begin(), instances.end(), [&](const Instance& i) { return i.id == r.id; });
    if (!known) throw ContractError("rigid motion references unknown instance id " + std::to_string(r.id));
    poses[r.id] = pose_from_euler(r.motion);
  }
  VectorField3 out(points.height(), points.width());
  std::vector<bool> assigned(points.pixel_count(), false);
  for (const Instance& inst : instances) {
    const auto it = poses.find(inst.id);
    const PoseSE3 pose = it == poses.end() ? PoseSE3::identity() : it->second;
    for (int v = 0; v < points.height(); ++v) {
      for (int u = 0; u < points.width(); ++u) {
        const std::size_t i = points.index(v, u);
        if (inst.mask(v, u) <= 0.5 || assigned[i]) continue;
        assigned[i] = true;
        const Eigen::Vector3d p = points.pixel(v, u);
        out.pixel(v, u) = transform(pose, Eigen::Vector3d(p + deformation.pixel(v, u))) - p;
      }
    }
  }
  return out;
}

StaticFilterResult static_filter(const ColorImage& target, const ColorImage& before, const ColorImage& after,
                                 const InstanceSet& instances, double alpha) {
  require_same_shape(target, before, "static_filter before");
  require_same_shape(target, after, "static_filter after");
  validate_instances(instances, target.height(), target.width());
  const ScalarField map_before = photometric_loss_map(before, target, alpha);
  const ScalarField map_after = photometric_loss_map(after, target, alpha);
  StaticFilterResult result;
  for (const Instance& inst : instances) {
    double sum_before = 0.0, sum_after = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < inst.mask.pixel_count(); ++i) {
      if (inst.mask.data()[i] <= 0.5) continue;
      sum_before += map_before.data()[i];
      sum_after += map_after.data()[i];
      ++n;
    }
    if (n == 0) {
      result.skipped_ids.push_back(inst.id);
      continue;
    }
    const double lb = sum_before / n, la = sum_after / n;
    result.loss_before[inst.id] = lb;
    result.loss_after[inst.id] = la;
    (la < lb ? result.dynamic_ids : result.static_ids).push_back(inst.id);
  }
  return result;
}

ColorImage motion_visualization(const VectorField3& motion) {
  double m = 0.0;
  for (double x : motion.data()) m = std::max(m, std::abs(x));
  ColorImage out(motion.height(), motion.width(), 0.5);
  if (m == 0.0) return out;
  for (std::size_t i = 0; i < motion.data().size(); ++i)
    out.data()[i] = std::clamp((motion.data()[i] / m + 1.0) / 2.0, 0.0, 1.0);
  return out;
}

}  // namespace do3d
