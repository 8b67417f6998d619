#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "do3d/camera.hpp"
#include "do3d/grid.hpp"
#include "do3d/motion.hpp"

namespace do3d {

/// Infinite textured plane through (0, 0, depth) with the given normal.
struct BackgroundSpec {
  double depth = 20.0;
  Eigen::Vector3d normal{0.0, 0.0, -1.0};
  std::uint64_t texture_seed = 1;
};

/// Separable sinusoidal offset field over the object's local (x, y):
/// amplitude in meters, frequency in cycles per meter.
struct DeformationSpec {
  double amplitude = 0.0;
  double frequency = 1.0;
};

enum class ObjectShape { Rectangle, Box };

struct ObjectSpec {
  int id = 1;
  ObjectShape shape = ObjectShape::Rectangle;
  /// Width (local x), height (local y) and, for boxes, depth (local z), meters.
  Eigen::Vector3d size{1.0, 1.0, 1.0};
  /// Center and orientation at the target time, target camera frame.
  EulerPose pose;
  /// Rigid motion applied in the target camera frame between the frames.
  EulerPose motion;
  std::optional<DeformationSpec> deformation;
  std::uint64_t texture_seed = 2;
};

struct SceneSpec {
  int width = 128;
  int height = 96;
  Intrinsics K{100.0, 100.0, 63.5, 47.5};
  /// T_{t->s}: maps target camera coordinates to source camera coordinates.
  EulerPose ego;
  BackgroundSpec background;
  std::vector<ObjectSpec> objects;
  std::uint64_t seed = 0;

  /// Dimension, intrinsics, id-uniqueness and in-front checks. Throws SpecError.
  void validate() const;
};

/// Texture lattice spacing in pixels at each surface's reference depth.
inline constexpr double kTextureLatticePixels = 12.0;

/// Scale-relative depth tolerance of the occlusion test.
inline constexpr double kOcclusionTolerance = 1e-3;

/// A synthetic frame pair with complete ground truth.
struct RenderedPair {
  SceneSpec spec;
  Intrinsics K;
  ColorImage image_t;
  ColorImage image_s;
  ScalarField depth_t;
  ScalarField depth_s;
  InstanceSet instances_t;
  InstanceSet instances_s;
  EulerPose ego;
  std::vector<RigidMotion6DoF> rigids;
  /// Per-pixel deformation offsets (target frame), zero off deformed objects.
  VectorField3 deformation;
  /// (u_s - u_t, v_s - v_t), zero where invalid.
  FlowField flow;
  /// Source-frame minus target-frame position of the surface point.
  VectorField3 scene_flow;
  /// Depth of each target point in the source camera (0 where invalid).
  ScalarField warped_depth;
  BinaryMask noc;
  BinaryMask valid;

  int height() const { return image_t.height(); }
  int width() const { return image_t.width(); }
};

/// Ray casts both frames and derives flow, scene flow and occlusion.
RenderedPair render_pair(const SceneSpec& spec);

/// Flow recomputed through the warping pipeline from the pair's depth,
/// ego pose and object motion.
FlowField gt_optical_flow(const RenderedPair& pair);

/// Non-occluded iff the true correspondence lands in bounds and the source
/// depth buffer, bilinearly sampled there, matches the projected depth within
/// kOcclusionTolerance (relative). Footprints straddling a depth edge count
/// as occluded.
BinaryMask gt_occlusion_mask(const RenderedPair& pair);

/// The test above on explicit fields.
BinaryMask occlusion_from_depth_buffer(const ScalarField& depth_s, const FlowField& flow, const ScalarField& warped_depth,
                                       const BinaryMask& valid);

/// Nearest surface along the ray through (u, v) of the source camera.
struct RayHit {
  double depth = 0.0;
  int object_id = 0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};
std::optional<RayHit> cast_source_ray(const SceneSpec& spec, double u, double v);
std::optional<RayHit> cast_target_ray(const SceneSpec& spec, double u, double v);

/// Object-local deformation offset (camera-frame vector).
Eigen::Vector3d deformation_offset(const DeformationSpec& d, double local_x, double local_y);

}  // namespace do3d
