#include "do3d/scene.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "do3d/parallel.hpp"
#include "do3d/warp.hpp"

namespace do3d {
namespace {

constexpr double kTwoPi = 6.283185307179586;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice_value(std::uint64_t seed, long i, long j, int channel) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(i));
  h = splitmix64(h ^ static_cast<std::uint64_t>(j));
  h = splitmix64(h ^ static_cast<std::uint64_t>(channel));
  const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;
  return 0.05 + 0.9 * unit;
}

/// Bilinear value noise; (s, t) in lattice units.
Eigen::Vector3d value_noise(std::uint64_t seed, double s, double t) {
  const double fs = std::floor(s), ft = std::floor(t);
  const long i = static_cast<long>(fs), j = static_cast<long>(ft);
  const double a = s - fs, b = t - ft;
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) {
    const double v00 = lattice_value(seed, i, j, c), v10 = lattice_value(seed, i + 1, j, c);
    const double v01 = lattice_value(seed, i, j + 1, c), v11 = lattice_value(seed, i + 1, j + 1, c);
    out[c] = (1 - b) * ((1 - a) * v00 + a * v10) + b * ((1 - a) * v01 + a * v11);
  }
  return out;
}

struct Face {
  Eigen::Vector3d origin;
  Eigen::Vector3d e1;
  Eigen::Vector3d e2;
  bool infinite = false;
  int object_index = -1;  // -1 = background
  std::uint64_t texture_seed = 0;
  double cell = 1.0;  // lattice spacing, meters
};

struct FaceHit {
  double depth;
  double a;
  double b;
};

Eigen::Vector3d pixel_ray(const Intrinsics& K, double u, double v) {
  return Eigen::Vector3d((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
}

class SceneGeometry {
 public:
  explicit SceneGeometry(const SceneSpec& spec) : spec_(spec) {
    ego_ = pose_from_euler(spec.ego);
    Face bg;
    const Eigen::Vector3d n = spec.background.normal.normalized();
    Eigen::Vector3d x = Eigen::Vector3d::UnitX() - n.x() * n;
    if (x.norm() < 1e-6) x = Eigen::Vector3d::UnitY() - n.y() * n;
    bg.e1 = x.normalized();
    bg.e2 = n.cross(bg.e1).normalized();
    bg.origin = Eigen::Vector3d(0, 0, spec.background.depth);
    bg.infinite = true;
    bg.texture_seed = splitmix64(spec.seed ^ splitmix64(spec.background.texture_seed));
    bg.cell = kTextureLatticePixels * spec.background.depth / spec.K.fx;
    faces_.push_back(bg);
    source_pose_.push_back(ego_);

    for (std::size_t k = 0; k < spec.objects.size(); ++k) {
      const ObjectSpec& obj = spec.objects[k];
      const PoseSE3 place = pose_from_euler(obj.pose);
      object_place_.push_back(place);
      const PoseSE3 moved = compose(ego_, pose_from_euler(obj.motion));
      const double w = obj.size.x(), h = obj.size.y(), d = obj.size.z();
      const double cell = kTextureLatticePixels * obj.pose.translation.z() / spec.K.fx;
      auto add = [&](Eigen::Vector3d corner, Eigen::Vector3d a, Eigen::Vector3d b, int face) {
        Face f;
        f.origin = transform(place, corner);
        f.e1 = place.R * a;
        f.e2 = place.R * b;
        f.object_index = static_cast<int>(k);
        f.texture_seed = splitmix64(spec.seed ^ splitmix64(obj.texture_seed + 7919ULL * face));
        f.cell = cell;
        faces_.push_back(f);
        source_pose_.push_back(moved);
      };
      if (obj.shape == ObjectShape::Rectangle) {
        add({-w / 2, -h / 2, 0}, {w, 0, 0}, {0, h, 0}, 0);
      } else {
        add({-w / 2, -h / 2, -d / 2}, {w, 0, 0}, {0, h, 0}, 0);
        add({-w / 2, -h / 2, d / 2}, {w, 0, 0}, {0, h, 0}, 1);
        add({-w / 2, -h / 2, -d / 2}, {0, 0, d}, {0, h, 0}, 2);
        add({w / 2, -h / 2, -d / 2}, {0, 0, d}, {0, h, 0}, 3);
        add({-w / 2, -h / 2, -d / 2}, {w, 0, 0}, {0, 0, d}, 4);
        add({-w / 2, h / 2, -d / 2}, {w, 0, 0}, {0, 0, d}, 5);
      }
    }
  }

  struct Hit {
    double depth = 0.0;
    int face = -1;
    double a = 0.0, b = 0.0;
  };

  std::optional<Hit> cast_target(double u, double v) const {
    const Eigen::Vector3d ray = pixel_ray(spec_.K, u, v);
    std::optional<Hit> best;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const auto h = intersect(faces_[f].origin, faces_[f].e1, faces_[f].e2, faces_[f].infinite, ray);
      if (h && (!best || h->depth < best->depth)) best = Hit{h->depth, static_cast<int>(f), h->a, h->b};
    }
    return best;
  }

  std::optional<Hit> cast_source(double u, double v) const {
    const Eigen::Vector3d ray = pixel_ray(spec_.K, u, v);
    std::optional<Hit> best;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      const Face& face = faces_[f];
      const PoseSE3& g = source_pose_[f];
      std::optional<FaceHit> h =
          intersect(transform(g, face.origin), g.R * face.e1, g.R * face.e2, face.infinite, ray);
      if (const DeformationSpec* def = deformation_of(face)) h = intersect_deformed(f, *def, ray, h);
      if (h && (!best || h->depth < best->depth)) best = Hit{h->depth, static_cast<int>(f), h->a, h->b};
    }
    return best;
  }

  /// Target-frame surface point of a face parameterization.
  Eigen::Vector3d surface_point(int f, double a, double b) const {
    const Face& face = faces_[f];
    return face.origin + a * face.e1 + b * face.e2;
  }

  Eigen::Vector3d color(const Hit& hit) const {
    const Face& face = faces_[hit.face];
    const double s = face.infinite ? hit.a : hit.a * face.e1.norm();
    const double t = face.infinite ? hit.b : hit.b * face.e2.norm();
    return value_noise(face.texture_seed, s / face.cell, t / face.cell);
  }

  int object_id(const Hit& hit) const {
    const int k = faces_[hit.face].object_index;
    return k < 0 ? 0 : spec_.objects[k].id;
  }

  /// Deformation offset at a target-frame point on face f (zero if none).
  Eigen::Vector3d offset(int f, const Eigen::Vector3d& x) const {
    const DeformationSpec* def = deformation_of(faces_[f]);
    if (def == nullptr) return Eigen::Vector3d::Zero();
    const PoseSE3& place = object_place_[faces_[f].object_index];
    const Eigen::Vector3d local = place.R.transpose() * (x - place.t);
    return deformation_offset(*def, local.x(), local.y());
  }

  /// Source-frame position of a target-frame surface point.
  Eigen::Vector3d to_source(int f, const Eigen::Vector3d& x) const {
    return transform(source_pose_[f], Eigen::Vector3d(x + offset(f, x)));
  }

 private:
  const DeformationSpec* deformation_of(const Face& face) const {
    if (face.object_index < 0) return nullptr;
    const auto& d = spec_.objects[face.object_index].deformation;
    return d && d->amplitude != 0.0 ? &*d : nullptr;
  }

  static std::optional<FaceHit> intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& e1,
                                          const Eigen::Vector3d& e2, bool infinite, const Eigen::Vector3d& ray) {
    if (infinite) {
      const Eigen::Vector3d n = e1.cross(e2);
      const double den = n.dot(ray);
      if (std::abs(den) < 1e-12) return std::nullopt;
      const double depth = n.dot(o) / den;
      if (!(depth > kMinProjectDepth)) return std::nullopt;
      const Eigen::Vector3d p = depth * ray - o;
      return FaceHit{depth, p.dot(e1), p.dot(e2)};
    }
    Eigen::Matrix3d A;
    A << ray, -e1, -e2;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::Vector3d x = lu.solve(o);
    if (!(x[0] > kMinProjectDepth) || x[1] < 0.0 || x[1] > 1.0 || x[2] < 0.0 || x[2] > 1.0) return std::nullopt;
    return FaceHit{x[0], x[1], x[2]};
  }

  // Solves G(X(a,b) + offset(X(a,b))) = depth * ray by Newton iteration.
  std::optional<FaceHit> intersect_deformed(std::size_t f, const DeformationSpec&, const Eigen::Vector3d& ray,
                                            std::optional<FaceHit> start) const {
    const Face& face = faces_[f];
    const PoseSE3& g = source_pose_[f];
    Eigen::Vector3d x;
    if (start) {
      x << start->depth, start->a, start->b;
    } else {
      Eigen::Matrix3d A;
      A << ray, -(g.R * face.e1), -(g.R * face.e2);
      Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
      if (!lu.isInvertible()) return std::nullopt;
      x = lu.solve(transform(g, face.origin));
      if (!(x[1] > -0.5 && x[1] < 1.5 && x[2] > -0.5 && x[2] < 1.5)) return std::nullopt;
    }
    auto residual = [&](const Eigen::Vector3d& p) {
      const Eigen::Vector3d pt = surface_point(static_cast<int>(f), p[1], p[2]);
      return Eigen::Vector3d(to_source(static_cast<int>(f), pt) - p[0] * ray);
    };
    for (int it = 0; it < 40; ++it) {
      const Eigen::Vector3d r = residual(x);
      if (r.norm() < 1e-13) break;
      Eigen::Matrix3d J;
      for (int k = 0; k < 3; ++k) {
        Eigen::Vector3d step = Eigen::Vector3d::Zero();
        step[k] = 1e-7;
        J.col(k) = (residual(x + step) - residual(x - step)) / 2e-7;
      }
      Eigen::FullPivLU<Eigen::Matrix3d> lu(J);
      if (!lu.isInvertible()) return std::nullopt;
      x -= lu.solve(r);
    }
    if (residual(x).norm() > 1e-9) return std::nullopt;
    if (!(x[0] > kMinProjectDepth) || x[1] < 0.0 || x[1] > 1.0 || x[2] < 0.0 || x[2] > 1.0) return std::nullopt;
    return FaceHit{x[0], x[1], x[2]};
  }

  const SceneSpec& spec_;
  PoseSE3 ego_;
  std::vector<Face> faces_;
  std::vector<PoseSE3> source_pose_;
  std::vector<PoseSE3> object_place_;
};

std::string object_path(std::size_t k, const char* field) {
  return "objects[" + std::to_string(k) + "]." + field;
}

std::vector<Eigen::Vector3d> object_corners(const ObjectSpec& obj) {
  const PoseSE3 place = pose_from_euler(obj.pose);
  const double w = obj.size.x() / 2, h = obj.size.y() / 2;
  const double d = obj.shape == ObjectShape::Box ? obj.size.z() / 2 : 0.0;
  std::vector<Eigen::Vector3d> out;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0})
      for (double sz : {-1.0, 1.0}) out.push_back(transform(place, Eigen::Vector3d(sx * w, sy * h, sz * d)));
  return out;
}

}  // namespace

Eigen::Vector3d deformation_offset(const DeformationSpec& d, double x, double y) {
  const double px = kTwoPi * d.frequency * x, py = kTwoPi * d.frequency * y;
  return d.amplitude *
         Eigen::Vector3d(std::sin(px) * std::cos(py), std::cos(px) * std::sin(py), std::sin(px) * std::sin(py));
}

void SceneSpec::validate() const {
  if (width <= 1 || height <= 1) throw SpecError("width/height: must be at least 2");
  if (!(K.fx > 0.0)) throw SpecError("intrinsics.fx: must be positive");
  if (!(K.fy > 0.0)) throw SpecError("intrinsics.fy: must be positive");
  if (!(background.depth > 0.0)) throw SpecError("background.depth: must be positive");
  if (background.normal.norm() < 1e-9) throw SpecError("background.normal: must be nonzero");
  if (std::abs(background.normal.normalized().z()) < 1e-6)
    throw SpecError("background.normal: plane must face the camera");
  const PoseSE3 ego_pose = pose_from_euler(ego);
  std::set<int> ids;
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const ObjectSpec& obj = objects[k];
    if (obj.id <= 0) throw SpecError(object_path(k, "id") + ": must be positive");
    if (!ids.insert(obj.id).second) throw SpecError(object_path(k, "id") + ": duplicate id " + std::to_string(obj.id));
    if (!(obj.size.x() > 0.0 && obj.size.y() > 0.0) || (obj.shape == ObjectShape::Box && !(obj.size.z() > 0.0)))
      throw SpecError(object_path(k, "size") + ": extents must be positive");
    if (obj.deformation && !(obj.deformation->frequency >= 0.0))
      throw SpecError(object_path(k, "deformation.frequency") + ": must be non-negative");
    const PoseSE3 moved = compose(ego_pose, pose_from_euler(obj.motion));
    for (const Eigen::Vector3d& c : object_corners(obj)) {
      if (!(c.z() > kMinProjectDepth)) throw SpecError(object_path(k, "pose") + ": surface behind the target camera");
      if (!(transform(moved, c).z() > kMinProjectDepth))
        throw SpecError(object_path(k, "motion") + ": surface behind the source camera");
    }
  }
}

std::optional<RayHit> cast_source_ray(const SceneSpec& spec, double u, double v) {
  const SceneGeometry geo(spec);
  const auto hit = geo.cast_source(u, v);
  if (!hit) return std::nullopt;
  return RayHit{hit->depth, geo.object_id(*hit), geo.color(*hit)};
}

std::optional<RayHit> cast_target_ray(const SceneSpec& spec, double u, double v) {
  const SceneGeometry geo(spec);
  const auto hit = geo.cast_target(u, v);
  if (!hit) return std::nullopt;
  return RayHit{hit->depth, geo.object_id(*hit), geo.color(*hit)};
}

RenderedPair render_pair(const SceneSpec& spec) {
  spec.validate();
  const SceneGeometry geo(spec);
  const int h = spec.height, w = spec.width;
  RenderedPair pair;
  pair.spec = spec;
  pair.K = spec.K;
  pair.ego = spec.ego;
  pair.image_t = ColorImage(h, w);
  pair.image_s = ColorImage(h, w);
  pair.depth_t = ScalarField(h, w);
  pair.depth_s = ScalarField(h, w);
  pair.deformation = VectorField3(h, w);
  pair.flow = FlowField(h, w);
  pair.scene_flow = VectorField3(h, w);
  pair.warped_depth = ScalarField(h, w);
  pair.noc = BinaryMask(h, w);
  pair.valid = BinaryMask(h, w);
  ScalarField ids_t(h, w), ids_s(h, w);
  std::vector<int> missing(h, -1);

  parallel_rows(h, [&](int v) {
    for (int u = 0; u < w; ++u) {
      const auto hs = geo.cast_source(u, v);
      const auto ht = geo.cast_target(u, v);
      if (!hs || !ht) {
        missing[v] = u;
        continue;
      }
      pair.image_s.pixel(v, u) = geo.color(*hs);
      pair.depth_s(v, u) = hs->depth;
      ids_s(v, u) = geo.object_id(*hs);

      pair.image_t.pixel(v, u) = geo.color(*ht);
      pair.depth_t(v, u) = ht->depth;
      ids_t(v, u) = geo.object_id(*ht);
      const Eigen::Vector3d x = ht->depth * pixel_ray(spec.K, u, v);
      pair.deformation.pixel(v, u) = geo.offset(ht->face, x);
      const Eigen::Vector3d xs = geo.to_source(ht->face, x);
      double us = 0.0, vs = 0.0;
      if (!project_point(spec.K, xs, us, vs)) continue;
      if (!(us >= 0.0 && vs >= 0.0 && us <= w - 1 && vs <= h - 1)) continue;
      pair.valid(v, u) = 1.0;
      pair.flow(v, u, 0) = us - u;
      pair.flow(v, u, 1) = vs - v;
      pair.scene_flow.pixel(v, u) = xs - x;
      pair.warped_depth(v, u) = xs.z();
    }
  });
  for (int v = 0; v < h; ++v)
    if (missing[v] >= 0)
      throw SpecError("background: no surface in front of the camera at pixel (" + std::to_string(missing[v]) +
                      ", " + std::to_string(v) + ")");

  pair.noc = occlusion_from_depth_buffer(pair.depth_s, pair.flow, pair.warped_depth, pair.valid);
  pair.instances_t = instances_from_id_map(ids_t);
  pair.instances_s = instances_from_id_map(ids_s);
  for (const ObjectSpec& obj : spec.objects) {
    const bool visible = std::any_of(pair.instances_t.begin(), pair.instances_t.end(),
                                     [&](const Instance& i) { return i.id == obj.id; });
    if (visible) pair.rigids.push_back(RigidMotion6DoF{obj.id, obj.motion});
  }
  return pair;
}

FlowField gt_optical_flow(const RenderedPair& pair) {
  const VectorField3 points = backproject_depth(pair.K, pair.depth_t);
  const VectorField3 motion = compose_object_motion(points, pair.instances_t, pair.rigids, pair.deformation);
  const CorrespondenceMap corr = project_correspondence(pair.depth_t, pair.K, pose_from_euler(pair.ego), motion);
  FlowField flow(pair.height(), pair.width());
  for (int v = 0; v < pair.height(); ++v) {
    for (int u = 0; u < pair.width(); ++u) {
      if (corr.valid(v, u) <= 0.5) continue;
      flow(v, u, 0) = corr.u_s(v, u) - u;
      flow(v, u, 1) = corr.v_s(v, u) - v;
    }
  }
  return flow;
}

BinaryMask gt_occlusion_mask(const RenderedPair& pair) {
  const VectorField3 points = backproject_depth(pair.K, pair.depth_t);
  const VectorField3 motion = compose_object_motion(points, pair.instances_t, pair.rigids, pair.deformation);
  const CorrespondenceMap corr = project_correspondence(pair.depth_t, pair.K, pose_from_euler(pair.ego), motion);
  FlowField flow(pair.height(), pair.width());
  for (int v = 0; v < pair.height(); ++v)
    for (int u = 0; u < pair.width(); ++u) {
      flow(v, u, 0) = corr.u_s(v, u) - u;
      flow(v, u, 1) = corr.v_s(v, u) - v;
    }
  return occlusion_from_depth_buffer(pair.depth_s, flow, corr.d_s, corr.valid);
}

BinaryMask occlusion_from_depth_buffer(const ScalarField& depth_s, const FlowField& flow, const ScalarField& warped_depth,
                                       const BinaryMask& valid) {
  require_same_shape(depth_s, flow, "occlusion depth buffer vs flow");
  BinaryMask noc(depth_s.height(), depth_s.width());
  for (int v = 0; v < depth_s.height(); ++v) {
    for (int u = 0; u < depth_s.width(); ++u) {
      if (valid(v, u) <= 0.5) continue;
      const double z = warped_depth(v, u);
      const auto seen = bilinear_sample(depth_s, u + flow(v, u, 0), v + flow(v, u, 1));
      if (seen.valid && std::abs(seen.value[0] - z) <= kOcclusionTolerance * z) noc(v, u) = 1.0;
    }
  }
  return noc;
}

}  // namespace do3d
