#pragma once

#include <map>
#include <vector>

#include "do3d/camera.hpp"
#include "do3d/grid.hpp"

namespace do3d {

/// Context margin added around object boxes, in pixels.
inline constexpr int kBoxMargin = 20;

/// Per-object 6-DoF motion, expressed in the target camera frame.
struct RigidMotion6DoF {
  int id = 0;
  EulerPose motion;
};

struct Instance {
  int id = 0;
  BinaryMask mask;
  BBox box;
};

using InstanceSet = std::vector<Instance>;

/// Checks unique ids and mask dimensions.
void validate_instances(const InstanceSet& instances, int height, int width);

/// Builds an instance set from an id map (0 = background), sorted by id.
InstanceSet instances_from_id_map(const ScalarField& ids);
ScalarField id_map_from_instances(const InstanceSet& instances, int height, int width);

/// Union of all instance masks.
BinaryMask instance_union(const InstanceSet& instances, int height, int width);

/// Grows every side by `margin` pixels, clamped to the image.
BBox enlarge_bbox(const BBox& box, int height, int width, int margin = kBoxMargin);

/// P_t: every pixel backprojected with its depth.
VectorField3 backproject_depth(const Intrinsics& K, const ScalarField& depth);

/// M = M_rig(P_t + M_def) - P_t inside each instance mask, 0 elsewhere.
/// Instances without a rigid entry use the identity. A rigid entry whose id
/// has no instance throws ContractError.
VectorField3 compose_object_motion(const VectorField3& points, const InstanceSet& instances,
                                   const std::vector<RigidMotion6DoF>& rigids, const VectorField3& deformation);

struct StaticFilterResult {
  std::vector<int> dynamic_ids;
  std::vector<int> static_ids;
  std::vector<int> skipped_ids;  // empty masks
  std::map<int, double> loss_before;
  std::map<int, double> loss_after;
};

/// Keeps an object as dynamic iff its mean photometric loss over the mask
/// strictly decreases from `before` to `after`.
StaticFilterResult static_filter(const ColorImage& target, const ColorImage& before, const ColorImage& after,
                                 const InstanceSet& instances, double alpha);

/// x, y, z mapped to R, G, B over the symmetric range [-m, m], m = max |component|.
ColorImage motion_visualization(const VectorField3& motion);

}  // namespace do3d
