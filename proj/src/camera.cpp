#include "do3d/camera.hpp"

#include <algorithm>

namespace do3d {

EulerPose euler_from_pose(const PoseSE3& pose) {
  // R = Rz(yaw) Ry(pitch) Rx(roll): R(2,0) = -sin(pitch).
  EulerPose e;
  const Mat3<double>& R = pose.R;
  e.pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  e.roll = std::atan2(R(2, 1), R(2, 2));
  e.yaw = std::atan2(R(1, 0), R(0, 0));
  e.translation = pose.t;
  return e;
}

Eigen::Vector3d backproject(const Intrinsics& K, double u, double v, double depth) {
  if (!(depth > 0.0)) throw DomainError("backproject requires positive depth, got " + std::to_string(depth));
  return backproject_ray(K, u, v, depth);
}

Projection project(const Intrinsics& K, const Eigen::Vector3d& x) {
  Projection p;
  if (!project_point(K, x, p.u, p.v))
    throw BehindCameraError("point with z = " + std::to_string(x.z()) + " is behind the camera");
  p.depth = x.z();
  return p;
}

bool is_rigid(const PoseSE3& pose, double tol) {
  const double ortho = (pose.R.transpose() * pose.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(pose.R.determinant() - 1.0) <= tol;
}

Vector6d to_vector(const EulerPose& e) {
  Vector6d p;
  p << e.pitch, e.roll, e.yaw, e.translation;
  return p;
}

EulerPose euler_from_vector(const Vector6d& p) {
  EulerPose e;
  e.pitch = p[0];
  e.roll = p[1];
  e.yaw = p[2];
  e.translation = p.tail<3>();
  return e;
}

}  // namespace do3d
