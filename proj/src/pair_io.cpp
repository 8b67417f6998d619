#include "do3d/pair_io.hpp"

#include <set>

#include "do3d/errors.hpp"
#include "do3d/image_io.hpp"

namespace do3d {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SpecError((path.empty() ? "spec" : path) + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items())
    if (!ok.count(item.key())) throw SpecError(path + (path.empty() ? "" : ".") + item.key() + ": unknown field");
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SpecError(path + ": expected a number");
  return j.get<double>();
}

std::int64_t get_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw SpecError(path + ": expected an integer");
  return j.get<std::int64_t>();
}

std::uint64_t get_seed(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
    throw SpecError(path + ": expected a non-negative integer");
  return j.get<std::uint64_t>();
}

Eigen::Vector3d get_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw SpecError(path + ": expected an array of 3 numbers");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v[i] = get_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json grid_entry(const std::string& name, const std::string& what, const std::string& bytes) {
  return json{{"name", name}, {"description", what}, {"fnv1a", fnv1a_hex(bytes)}};
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json euler_to_json(const EulerPose& e) {
  return json{{"pitch", e.pitch}, {"roll", e.roll}, {"yaw", e.yaw}, {"translation", vec3_json(e.translation)}};
}

EulerPose euler_from_json(const json& j, const std::string& path) {
  check_keys(j, path, {"pitch", "roll", "yaw", "translation"});
  EulerPose e;
  if (j.contains("pitch")) e.pitch = get_number(j["pitch"], join(path, "pitch"));
  if (j.contains("roll")) e.roll = get_number(j["roll"], join(path, "roll"));
  if (j.contains("yaw")) e.yaw = get_number(j["yaw"], join(path, "yaw"));
  if (j.contains("translation")) e.translation = get_vec3(j["translation"], join(path, "translation"));
  return e;
}

json spec_to_json(const SceneSpec& spec) {
  json objects = json::array();
  for (const ObjectSpec& o : spec.objects) {
    json jo{{"id", o.id},
            {"shape", o.shape == ObjectShape::Box ? "box" : "rectangle"},
            {"size", vec3_json(o.size)},
            {"pose", euler_to_json(o.pose)},
            {"motion", euler_to_json(o.motion)},
            {"texture_seed", o.texture_seed}};
    if (o.deformation)
      jo["deformation"] = json{{"amplitude", o.deformation->amplitude}, {"frequency", o.deformation->frequency}};
    objects.push_back(jo);
  }
  return json{{"width", spec.width},
              {"height", spec.height},
              {"intrinsics", {{"fx", spec.K.fx}, {"fy", spec.K.fy}, {"cx", spec.K.cx}, {"cy", spec.K.cy}}},
              {"ego", euler_to_json(spec.ego)},
              {"background",
               {{"depth", spec.background.depth},
                {"normal", vec3_json(spec.background.normal)},
                {"texture_seed", spec.background.texture_seed}}},
              {"objects", objects},
              {"seed", spec.seed}};
}

SceneSpec spec_from_json(const json& j) {
  check_keys(j, "", {"width", "height", "intrinsics", "ego", "background", "objects", "seed"});
  SceneSpec s;
  if (j.contains("width")) s.width = static_cast<int>(get_integer(j["width"], "width"));
  if (j.contains("height")) s.height = static_cast<int>(get_integer(j["height"], "height"));
  if (j.contains("intrinsics")) {
    const json& k = j["intrinsics"];
    check_keys(k, "intrinsics", {"fx", "fy", "cx", "cy"});
    for (const char* f : {"fx", "fy", "cx", "cy"})
      if (!k.contains(f)) throw SpecError(std::string("intrinsics.") + f + ": missing");
    s.K = {get_number(k["fx"], "intrinsics.fx"), get_number(k["fy"], "intrinsics.fy"),
           get_number(k["cx"], "intrinsics.cx"), get_number(k["cy"], "intrinsics.cy")};
  }
  if (j.contains("ego")) s.ego = euler_from_json(j["ego"], "ego");
  if (j.contains("background")) {
    const json& b = j["background"];
    check_keys(b, "background", {"depth", "normal", "texture_seed"});
    if (b.contains("depth")) s.background.depth = get_number(b["depth"], "background.depth");
    if (b.contains("normal")) s.background.normal = get_vec3(b["normal"], "background.normal");
    if (b.contains("texture_seed")) s.background.texture_seed = get_seed(b["texture_seed"], "background.texture_seed");
  }
  if (j.contains("objects")) {
    if (!j["objects"].is_array()) throw SpecError("objects: expected an array");
    for (std::size_t i = 0; i < j["objects"].size(); ++i) {
      const json& o = j["objects"][i];
      const std::string p = "objects[" + std::to_string(i) + "]";
      check_keys(o, p, {"id", "shape", "size", "pose", "motion", "deformation", "texture_seed"});
      ObjectSpec obj;
      if (!o.contains("id")) throw SpecError(p + ".id: missing");
      obj.id = static_cast<int>(get_integer(o["id"], p + ".id"));
      if (o.contains("shape")) {
        if (o["shape"] == "box") obj.shape = ObjectShape::Box;
        else if (o["shape"] == "rectangle") obj.shape = ObjectShape::Rectangle;
        else throw SpecError(p + ".shape: expected \"box\" or \"rectangle\"");
      }
      if (o.contains("size")) obj.size = get_vec3(o["size"], p + ".size");
      if (o.contains("pose")) obj.pose = euler_from_json(o["pose"], p + ".pose");
      if (o.contains("motion")) obj.motion = euler_from_json(o["motion"], p + ".motion");
      if (o.contains("deformation")) {
        const json& d = o["deformation"];
        check_keys(d, p + ".deformation", {"amplitude", "frequency"});
        DeformationSpec def;
        if (d.contains("amplitude")) def.amplitude = get_number(d["amplitude"], p + ".deformation.amplitude");
        if (d.contains("frequency")) def.frequency = get_number(d["frequency"], p + ".deformation.frequency");
        obj.deformation = def;
      }
      if (o.contains("texture_seed")) obj.texture_seed = get_seed(o["texture_seed"], p + ".texture_seed");
      s.objects.push_back(obj);
    }
  }
  if (j.contains("seed")) s.seed = get_seed(j["seed"], "seed");
  s.validate();
  return s;
}

SceneSpec load_spec(const fs::path& path) {
  if (!fs::exists(path)) throw SpecError(path.string() + ": no such file");
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON", e.byte);
  }
  return spec_from_json(j);
}

std::string spec_hash(const SceneSpec& spec) { return fnv1a_hex(spec_to_json(spec).dump()); }

void export_pair(const RenderedPair& pair, const fs::path& dir) {
  fs::create_directories(dir);
  const int h = pair.height(), w = pair.width();
  FlowField flow = pair.flow;
  VectorField3 flow3(h, w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      flow3(v, u, 0) = flow(v, u, 0);
      flow3(v, u, 1) = flow(v, u, 1);
      flow3(v, u, 2) = pair.valid(v, u);
    }
  json motion{{"ego", euler_to_json(pair.ego)}, {"objects", json::array()}};
  for (const RigidMotion6DoF& r : pair.rigids) motion["objects"].push_back({{"id", r.id}, {"motion", euler_to_json(r.motion)}});

  const std::vector<std::tuple<std::string, std::string, std::string>> files = {
      {"I_t.ppm", "target image", write_ppm(pair.image_t)},
      {"I_s.ppm", "source image", write_ppm(pair.image_s)},
      {"depth_t.pfm", "target depth (m)", write_pfm(pair.depth_t)},
      {"depth_s.pfm", "source depth (m)", write_pfm(pair.depth_s)},
      {"flow.pfm", "optical flow (du, dv, valid)", write_pfm(flow3)},
      {"scene_flow.pfm", "scene flow (m, target camera axes)", write_pfm(pair.scene_flow)},
      {"warped_depth.pfm", "target points' depth in the source camera", write_pfm(pair.warped_depth)},
      {"mask_noc.pfm", "non-occluded mask", write_pfm(pair.noc)},
      {"mask_valid.pfm", "validity mask", write_pfm(pair.valid)},
      {"instances_t.pfm", "target instance id map", write_pfm(id_map_from_instances(pair.instances_t, h, w))},
      {"instances_s.pfm", "source instance id map", write_pfm(id_map_from_instances(pair.instances_s, h, w))},
      {"deformation.pfm", "deformation offsets (m)", write_pfm(pair.deformation)},
      {"gt_motion.json", "ground-truth ego and object motion", motion.dump(2) + "\n"},
      {"spec.json", "scene spec", spec_to_json(pair.spec).dump(2) + "\n"},
  };
  json manifest{{"format", "do3d-pair"},
                {"version", 1},
                {"width", w},
                {"height", h},
                {"spec_hash", spec_hash(pair.spec)},
                {"files", json::array()}};
  for (const auto& [name, what, bytes] : files) {
    write_file(dir / name, bytes);
    manifest["files"].push_back(grid_entry(name, what, bytes));
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

RenderedPair import_pair(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw SpecError(dir.string() + ": not a directory");
  for (const char* name : {"manifest.json", "spec.json", "I_t.ppm", "I_s.ppm", "instances_t.pfm"})
    if (!fs::exists(dir / name)) throw SpecError((dir / name).string() + ": missing pair file");
  RenderedPair pair;
  pair.spec = load_spec(dir / "spec.json");
  pair.K = pair.spec.K;
  pair.image_t = read_ppm(read_file(dir / "I_t.ppm"));
  pair.image_s = read_ppm(read_file(dir / "I_s.ppm"));
  const int h = pair.height(), w = pair.width();
  if (h != pair.spec.height || w != pair.spec.width) throw SpecError("I_t.ppm: dimensions disagree with spec.json");
  auto field = [&](const char* name, auto& out) {
    using G = std::remove_reference_t<decltype(out)>;
    if (fs::exists(dir / name)) {
      out = read_pfm<G>(read_file(dir / name));
    } else {
      out = G(h, w);
    }
    if (out.height() != h || out.width() != w) throw SpecError((dir / name).string() + ": wrong dimensions");
  };
  field("depth_t.pfm", pair.depth_t);
  field("depth_s.pfm", pair.depth_s);
  field("scene_flow.pfm", pair.scene_flow);
  field("warped_depth.pfm", pair.warped_depth);
  field("mask_noc.pfm", pair.noc);
  field("mask_valid.pfm", pair.valid);
  field("deformation.pfm", pair.deformation);
  VectorField3 flow3;
  field("flow.pfm", flow3);
  pair.flow = FlowField(h, w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      pair.flow(v, u, 0) = flow3(v, u, 0);
      pair.flow(v, u, 1) = flow3(v, u, 1);
    }
  ScalarField ids;
  field("instances_t.pfm", ids);
  pair.instances_t = instances_from_id_map(ids);
  field("instances_s.pfm", ids);
  pair.instances_s = instances_from_id_map(ids);
  pair.ego = pair.spec.ego;
  if (fs::exists(dir / "gt_motion.json")) {
    const json m = json::parse(read_file(dir / "gt_motion.json"));
    pair.ego = euler_from_json(m.at("ego"), "ego");
    for (const json& o : m.at("objects"))
      pair.rigids.push_back({o.at("id").get<int>(), euler_from_json(o.at("motion"), "motion")});
  }
  return pair;
}

}  // namespace do3d
