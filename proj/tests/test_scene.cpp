#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "do3d/loss.hpp"
#include "do3d/pair_io.hpp"
#include "do3d/scene.hpp"
#include "do3d/warp.hpp"

using namespace do3d;
namespace fs = std::filesystem;

namespace {

SceneSpec plane_spec(double depth) {
  SceneSpec spec;
  spec.width = 40;
  spec.height = 30;
  spec.K = Intrinsics{40, 40, 19.5, 14.5};
  spec.background.depth = depth;
  return spec;
}

ObjectSpec box(int id, Eigen::Vector3d at, std::uint64_t seed) {
  ObjectSpec o;
  o.id = id;
  o.shape = ObjectShape::Box;
  o.size = {2.0, 2.0, 2.0};
  o.pose.translation = at;
  o.texture_seed = seed;
  return o;
}

// A box slides right behind a stationary nearer box.
SceneSpec occluding_spec() {
  SceneSpec spec = plane_spec(20.0);
  spec.width = 64;
  spec.height = 48;
  spec.K = Intrinsics{60, 60, 31.5, 23.5};
  spec.ego.translation = {0.0, 0.0, -0.5};
  ObjectSpec front = box(1, {0.5, 0.0, 6.0}, 3);
  ObjectSpec back = box(2, {-1.5, 0.0, 10.0}, 4);
  back.motion.translation = {1.5, 0.0, 0.0};
  spec.objects = {front, back};
  return spec;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("do3d_test_scene_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("identity ego and no objects leave the image unchanged") {
  const RenderedPair p = render_pair(plane_spec(10.0));
  CHECK(p.image_t == p.image_s);
  CHECK(p.depth_t == p.depth_s);
  for (double f : p.flow.data()) CHECK(f == doctest::Approx(0.0).scale(1e-12));
  CHECK(mask_count(p.valid) == p.depth_t.pixel_count());
  CHECK(mask_count(p.noc) == p.depth_t.pixel_count());
  CHECK(p.instances_t.empty());
}

TEST_CASE("forward motion over a fronto-parallel plane gives zoom flow") {
  SceneSpec spec = plane_spec(8.0);
  spec.ego.translation = {0.0, 0.0, -0.5};
  const RenderedPair p = render_pair(spec);
  for (double d : p.depth_t.data()) CHECK(d == doctest::Approx(8.0).epsilon(1e-12));
  const auto mag = [&](int v, int u) { return std::hypot(p.flow(v, u, 0), p.flow(v, u, 1)); };
  // Radial: flow points away from the principal point, growing with radius.
  const double cx = spec.K.cx, cy = spec.K.cy;
  for (int v = 0; v < spec.height; ++v)
    for (int u = 0; u < spec.width; ++u) {
      if (p.valid(v, u) < 0.5) continue;
      const double expected = std::hypot(u - cx, v - cy) * 8.0 / 7.5 - std::hypot(u - cx, v - cy);
      CHECK(mag(v, u) == doctest::Approx(expected).epsilon(1e-9).scale(1e-9));
      CHECK(p.flow(v, u, 0) * (u - cx) >= 0.0);
    }
  CHECK(mag(14, 20) < mag(14, 30));
  CHECK(mag(14, 30) < mag(14, 35));
}

TEST_CASE("a box co-moving with the camera has zero flow") {
  SceneSpec spec = plane_spec(20.0);
  spec.ego.translation = {0.0, 0.0, -1.0};
  ObjectSpec b = box(1, {0.0, 0.0, 8.0}, 5);
  b.motion.translation = {0.0, 0.0, 1.0};
  spec.objects = {b};
  const RenderedPair p = render_pair(spec);
  REQUIRE(p.instances_t.size() == 1);
  const BinaryMask& m = p.instances_t[0].mask;
  CHECK(mask_count(m) > 100);
  for (int v = 0; v < p.height(); ++v)
    for (int u = 0; u < p.width(); ++u)
      if (m(v, u) > 0.5) {
        CHECK(std::abs(p.flow(v, u, 0)) < 1e-12);
        CHECK(std::abs(p.flow(v, u, 1)) < 1e-12);
      }
}

TEST_CASE("ground-truth flow matches the warping pipeline") {
  for (const SceneSpec& spec : {occluding_spec(), plane_spec(9.0)}) {
    SceneSpec s = spec;
    s.ego.yaw = 0.01;
    s.ego.translation.x() = 0.1;
    const RenderedPair p = render_pair(s);
    const FlowField flow = gt_optical_flow(p);
    const VectorField3 points = backproject_depth(p.K, p.depth_t);
    const VectorField3 motion = compose_object_motion(points, p.instances_t, p.rigids, p.deformation);
    const CorrespondenceMap c = project_correspondence(p.depth_t, p.K, pose_from_euler(p.ego), motion);
    for (int v = 0; v < p.height(); ++v)
      for (int u = 0; u < p.width(); ++u) {
        if (c.valid(v, u) < 0.5) continue;
        CHECK(std::abs(flow(v, u, 0) - (c.u_s(v, u) - u)) < 1e-10);
        CHECK(std::abs(flow(v, u, 1) - (c.v_s(v, u) - v)) < 1e-10);
        CHECK(std::abs(p.flow(v, u, 0) - flow(v, u, 0)) < 1e-10);
      }
  }
}

TEST_CASE("lateral ego translation over a plane gives constant flow") {
  SceneSpec spec = plane_spec(10.0);
  spec.ego.translation = {0.2, 0.0, 0.0};
  const RenderedPair p = render_pair(spec);
  const double expected = spec.K.fx * 0.2 / 10.0;
  for (int v = 0; v < p.height(); ++v)
    for (int u = 0; u < p.width(); ++u) {
      if (p.valid(v, u) < 0.5) continue;
      CHECK(p.flow(v, u, 0) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(std::abs(p.flow(v, u, 1)) < 1e-12);
    }
  // The right-most columns map out of bounds.
  CHECK(p.valid(0, spec.width - 1) == 0.0);
  CHECK(p.noc(0, spec.width - 1) == 0.0);
}

TEST_CASE("background scene flow is the rigid camera displacement") {
  SceneSpec spec = plane_spec(12.0);
  spec.background.normal = {0.1, -0.2, -1.0};
  spec.ego.pitch = 0.02;
  spec.ego.yaw = -0.03;
  spec.ego.translation = {0.3, -0.1, -0.6};
  const RenderedPair p = render_pair(spec);
  const PoseSE3 T = pose_from_euler(spec.ego);
  for (int v = 0; v < p.height(); v += 3)
    for (int u = 0; u < p.width(); u += 3) {
      if (p.valid(v, u) < 0.5) continue;
      const Eigen::Vector3d X = backproject(p.K, u, v, p.depth_t(v, u));
      const Eigen::Vector3d expected = (T.R - Eigen::Matrix3d::Identity()) * X + T.t;
      CHECK((p.scene_flow.pixel(v, u) - expected).norm() < 1e-10);
    }
}

TEST_CASE("small motion over a single plane is non-occluded in the interior") {
  SceneSpec spec = plane_spec(10.0);
  spec.ego.translation = {0.05, 0.02, -0.1};
  const RenderedPair p = render_pair(spec);
  for (int v = 2; v < p.height() - 2; ++v)
    for (int u = 2; u < p.width() - 2; ++u) CHECK(p.noc(v, u) == 1.0);
  CHECK(gt_occlusion_mask(p) == p.noc);
}

TEST_CASE("occlusion agrees with a brute-force visibility test away from source depth edges") {
  const RenderedPair p = render_pair(occluding_spec());
  const BinaryMask noc = gt_occlusion_mask(p);
  CHECK(noc == p.noc);
  std::size_t hidden = 0, band = 0;
  for (int v = 0; v < p.height(); ++v)
    for (int u = 0; u < p.width(); ++u) {
      if (p.valid(v, u) < 0.5) {
        CHECK(noc(v, u) == 0.0);
        continue;
      }
      const double us = u + p.flow(v, u, 0), vs = v + p.flow(v, u, 1);
      const auto hit = cast_source_ray(p.spec, us, vs);
      REQUIRE(hit.has_value());
      const double z = p.warped_depth(v, u);
      const bool visible = std::abs(hit->depth - z) <= kOcclusionTolerance * z;
      if (!visible) ++hidden;
      if (visible == (noc(v, u) > 0.5)) continue;
      // Disagreements only where the bilinear footprint straddles a depth edge.
      ++band;
      CHECK(visible);
      const int u0 = static_cast<int>(std::floor(us)), v0 = static_cast<int>(std::floor(vs));
      double lo = INFINITY, hi = 0.0;
      for (int dv = 0; dv <= 1; ++dv)
        for (int du = 0; du <= 1; ++du) {
          const double d = p.depth_s(std::min(v0 + dv, p.height() - 1), std::min(u0 + du, p.width() - 1));
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
      CHECK(hi - lo > kOcclusionTolerance * lo);
    }
  CHECK(hidden > 20);
  CHECK(band < hidden);
}

TEST_CASE("rendering is deterministic") {
  const RenderedPair a = render_pair(occluding_spec()), b = render_pair(occluding_spec());
  CHECK(a.image_t == b.image_t);
  CHECK(a.image_s == b.image_s);
  CHECK(a.depth_t == b.depth_t);
  CHECK(a.flow == b.flow);
  CHECK(a.noc == b.noc);
  SceneSpec other = occluding_spec();
  other.seed = 99;
  CHECK_FALSE(render_pair(other).image_t == a.image_t);
}

TEST_CASE("spec validation") {
  SceneSpec s = plane_spec(10.0);
  s.objects = {box(1, {0, 0, 5}, 1), box(1, {1, 0, 5}, 2)};
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("duplicate id"), SpecError);
  s.objects = {box(1, {0, 0, 0.5}, 1)};
  CHECK_THROWS_WITH_AS(render_pair(s), doctest::Contains("behind the target camera"), SpecError);
  s.objects = {box(1, {0, 0, 5}, 1)};
  s.objects[0].motion.translation.z() = -5.0;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("behind the source camera"), SpecError);
  SceneSpec facing = plane_spec(10.0);
  facing.background.normal = {0, 0, 1};
  CHECK_NOTHROW(facing.validate());
  SceneSpec edge_on = plane_spec(10.0);
  edge_on.background.normal = {1, 0, 0};
  CHECK_THROWS_AS(edge_on.validate(), SpecError);
}

TEST_CASE("FNV-1a reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("spec JSON round trip and strict parsing") {
  SceneSpec s = occluding_spec();
  s.objects[1].deformation = DeformationSpec{0.05, 0.5};
  const SceneSpec back = spec_from_json(spec_to_json(s));
  CHECK(spec_to_json(back) == spec_to_json(s));
  CHECK(spec_hash(back) == spec_hash(s));
  s.seed = 1;
  CHECK(spec_hash(back) != spec_hash(s));

  nlohmann::json j = spec_to_json(s);
  j["objects"][0]["colour"] = 1;
  CHECK_THROWS_WITH_AS(spec_from_json(j), doctest::Contains("objects[0].colour: unknown field"), SpecError);
  j = spec_to_json(s);
  j["background"]["depth"] = "far";
  CHECK_THROWS_WITH_AS(spec_from_json(j), doctest::Contains("background.depth: expected a number"), SpecError);
  j = spec_to_json(s);
  j["objects"][1]["shape"] = "sphere";
  CHECK_THROWS_WITH_AS(spec_from_json(j), doctest::Contains("objects[1].shape"), SpecError);
  CHECK_THROWS_WITH_AS(load_spec("/nonexistent/spec.json"), doctest::Contains("/nonexistent/spec.json"), SpecError);
}

TEST_CASE("pair export and import round trip") {
  SceneSpec spec = occluding_spec();
  spec.ego.yaw = 0.01;
  const RenderedPair p = render_pair(spec);
  const fs::path dir = scratch_dir("roundtrip");
  export_pair(p, dir);

  const nlohmann::json manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  CHECK(manifest["format"] == "do3d-pair");
  CHECK(manifest["spec_hash"] == spec_hash(spec));
  CHECK(manifest["width"] == 64);
  for (const auto& f : manifest["files"]) {
    std::ifstream in(dir / f["name"].get<std::string>(), std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(f["fnv1a"] == fnv1a_hex(bytes));
  }

  const RenderedPair q = import_pair(dir);
  CHECK(spec_hash(q.spec) == spec_hash(spec));
  CHECK(to_vector(q.ego) == to_vector(p.ego));
  REQUIRE(q.rigids.size() == p.rigids.size());
  CHECK(q.rigids[1].id == 2);
  CHECK(q.rigids[1].motion.translation == p.rigids[1].motion.translation);
  CHECK(q.noc == p.noc);
  CHECK(q.valid == p.valid);
  REQUIRE(q.instances_t.size() == 2);
  CHECK(q.instances_t[0].mask == p.instances_t[0].mask);
  for (std::size_t i = 0; i < p.image_t.data().size(); ++i)
    CHECK(std::abs(q.image_t.data()[i] - p.image_t.data()[i]) <= 0.5 / 255 + 1e-12);
  for (std::size_t i = 0; i < p.depth_t.data().size(); ++i)
    CHECK(q.depth_t.data()[i] == doctest::Approx(p.depth_t.data()[i]).epsilon(1e-7));
  for (std::size_t i = 0; i < p.flow.data().size(); ++i)
    CHECK(q.flow.data()[i] == doctest::Approx(p.flow.data()[i]).epsilon(1e-6).scale(1e-6));

  fs::remove(dir / "I_s.ppm");
  CHECK_THROWS_WITH_AS(import_pair(dir), doctest::Contains("I_s.ppm"), SpecError);
  fs::remove_all(dir);
}

TEST_CASE("property: ground truth reproduces the target on non-occluded pixels") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SceneSpec spec = occluding_spec();
    spec.seed = seed;
    spec.ego.yaw = 0.01;
    const RenderedPair p = render_pair(spec);
    const VectorField3 points = backproject_depth(p.K, p.depth_t);
    const VectorField3 motion = compose_object_motion(points, p.instances_t, p.rigids, p.deformation);
    const auto warped = inverse_warp(p.image_s, project_correspondence(p.depth_t, p.K, pose_from_euler(p.ego), motion));
    const BinaryMask region = ssim_support_mask(mask_and(p.noc, warped.valid));
    CHECK(photometric_loss(warped.image, p.image_t, region, 0.85) < 1e-3);
  }
}
