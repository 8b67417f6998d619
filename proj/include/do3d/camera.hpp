#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

#include "do3d/errors.hpp"

namespace do3d {

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Mat3 = Eigen::Matrix<T, 3, 3>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Points with z at or below this many meters are behind the camera.
inline constexpr double kMinProjectDepth = 1e-6;

/// Pinhole intrinsics. Pixel (u, v) = (column, row), origin at the center of
/// the top-left pixel.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("focal lengths must be positive");
  }
  bool operator==(const Intrinsics&) const = default;
};

/// Rigid transform x -> R x + t.
template <typename T>
struct Pose {
  Mat3<T> R = Mat3<T>::Identity();
  Vec3<T> t = Vec3<T>::Zero();

  static Pose identity() { return Pose{}; }
};
using PoseSE3 = Pose<double>;

/// Pitch/roll/yaw (radians) plus translation (meters).
template <typename T>
struct Euler {
  T pitch = T(0);
  T roll = T(0);
  T yaw = T(0);
  Vec3<T> translation = Vec3<T>::Zero();
};
using EulerPose = Euler<double>;

/// R = Rz(yaw) * Ry(pitch) * Rx(roll).
template <typename T>
Mat3<T> rotation_from_euler(const T& pitch, const T& roll, const T& yaw) {
  using std::cos;
  using std::sin;
  const T cr = cos(roll), sr = sin(roll);
  const T cp = cos(pitch), sp = sin(pitch);
  const T cyw = cos(yaw), syw = sin(yaw);
  Mat3<T> rx, ry, rz;
  rx << T(1), T(0), T(0), T(0), cr, -sr, T(0), sr, cr;
  ry << cp, T(0), sp, T(0), T(1), T(0), -sp, T(0), cp;
  rz << cyw, -syw, T(0), syw, cyw, T(0), T(0), T(0), T(1);
  return rz * ry * rx;
}

template <typename T>
Pose<T> pose_from_euler(const Euler<T>& e) {
  return Pose<T>{rotation_from_euler(e.pitch, e.roll, e.yaw), e.translation};
}

/// Inverse of the above (pitch restricted to [-pi/2, pi/2]).
EulerPose euler_from_pose(const PoseSE3& pose);

template <typename T>
Pose<T> invert(const Pose<T>& p) {
  Pose<T> out;
  out.R = p.R.transpose();
  out.t = -(out.R * p.t);
  return out;
}

/// compose(a, b) applies b first, then a.
template <typename T>
Pose<T> compose(const Pose<T>& a, const Pose<T>& b) {
  return Pose<T>{a.R * b.R, a.R * b.t + a.t};
}

template <typename T>
Vec3<T> transform(const Pose<T>& p, const Vec3<T>& x) {
  return p.R * x + p.t;
}

/// d * K^-1 (u, v, 1) without the domain check (for differentiated paths).
template <typename T>
Vec3<T> backproject_ray(const Intrinsics& K, const T& u, const T& v, const T& d) {
  return Vec3<T>((u - K.cx) / K.fx * d, (v - K.cy) / K.fy * d, d);
}

/// Projects X; returns false when X is behind the camera.
template <typename T>
bool project_point(const Intrinsics& K, const Vec3<T>& x, T& u, T& v) {
  if (!(x.z() > kMinProjectDepth)) return false;
  u = K.fx * x.x() / x.z() + K.cx;
  v = K.fy * x.y() / x.z() + K.cy;
  return true;
}

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Throws DomainError for d <= 0.
Eigen::Vector3d backproject(const Intrinsics& K, double u, double v, double depth);
/// Throws BehindCameraError for X_z <= kMinProjectDepth.
Projection project(const Intrinsics& K, const Eigen::Vector3d& x);

/// R^T R = I and det R = 1 within `tol`.
bool is_rigid(const PoseSE3& pose, double tol = 1e-10);

/// (pitch, roll, yaw, tx, ty, tz)
Vector6d to_vector(const EulerPose& e);
EulerPose euler_from_vector(const Vector6d& p);

}  // namespace do3d
