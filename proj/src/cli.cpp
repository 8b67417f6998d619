#include "do3d/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "do3d/analysis.hpp"
#include "do3d/errors.hpp"
#include "do3d/image_io.hpp"
#include "do3d/metrics.hpp"
#include "do3d/pair_io.hpp"

namespace do3d {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Usage-level failure raised inside a subcommand.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure that is not an exception elsewhere (gradcheck).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

json read_json_arg(const std::string& arg, const std::string& what) {
  std::string text = arg;
  if (arg.empty() || arg.front() != '{') {
    if (!fs::exists(arg)) throw UsageError(what + ": no such file '" + arg + "'");
    text = read_file(arg);
  }
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(what + ": invalid JSON (" + e.what() + ")");
  }
}

LossWeights weights_from_json(const json& j) {
  LossWeights w;
  for (const auto& item : j.items()) {
    if (!item.value().is_number()) throw UsageError("weights." + item.key() + ": expected a number");
    const double v = item.value().get<double>();
    if (item.key() == "w_ph") w.w_ph = v;
    else if (item.key() == "w_ds") w.w_ds = v;
    else if (item.key() == "w_m") w.w_m = v;
    else if (item.key() == "alpha") w.alpha = v;
    else throw UsageError("weights." + item.key() + ": unknown field");
  }
  w.validate();
  return w;
}

void apply_schedule_json(StageSchedule& s, const json& j) {
  if (!j.is_object() || !j.contains("stages") || !j["stages"].is_array() || j["stages"].size() != 4)
    throw UsageError("schedule: expected {\"stages\": [4 stage objects]}");
  for (std::size_t i = 0; i < 4; ++i) {
    const json& st = j["stages"][i];
    for (const auto& item : st.items()) {
      const std::string path = "schedule.stages[" + std::to_string(i) + "]." + item.key();
      if (item.key() == "iterations") {
        if (!item.value().is_number_integer() || item.value().get<int>() < 0)
          throw UsageError(path + ": expected a non-negative integer");
        s.stages[i].iterations = item.value().get<int>();
      } else if (item.key() == "learning_rate") {
        if (!item.value().is_number() || item.value().get<double>() < 0)
          throw UsageError(path + ": expected a non-negative number");
        s.stages[i].learning_rate = item.value().get<double>();
      } else if (item.key() == "name") {
        if (!item.value().is_string() || item.value().get<std::string>() != s.stages[i].name)
          throw UsageError(path + ": stage order is fixed (expected \"" + s.stages[i].name + "\")");
      } else {
        throw UsageError(path + ": unknown field");
      }
    }
  }
}

json schedule_json(const StageSchedule& s) {
  json stages = json::array();
  for (const StageConfig& c : s.stages)
    stages.push_back({{"name", c.name}, {"iterations", c.iterations}, {"learning_rate", c.learning_rate}});
  return json{{"stages", stages}};
}

std::string format_target(double x) {
  char buf[64];
  if (std::abs(x - std::round(x)) < 1e-9) std::snprintf(buf, sizeof buf, "%.1f", x);
  else std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

InstanceSet dynamic_instances(const InstanceSet& all, const FitState& s) {
  InstanceSet out;
  for (const Instance& i : all)
    if (s.rigids.count(i.id)) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------- scene-gen

int cmd_scene_gen(const std::string& spec_path, const std::string& out_dir, const std::optional<std::uint64_t>& seed,
                  std::ostream& out) {
  SceneSpec spec = load_spec(spec_path);
  if (seed) spec.seed = *seed;
  const RenderedPair pair = render_pair(spec);
  export_pair(pair, out_dir);
  out << "wrote " << out_dir << " (spec " << spec_hash(spec) << ", " << pair.instances_t.size() << " objects)\n";
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeOptions {
  std::optional<double> t3, dt3, dgt;
  std::string sweep_dir;
  int object_id = -1;
  std::optional<double> dmin, dmax;
  int samples = 200;
  std::string csv_path;
  bool with_motion = false;
};

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
  if (o.sweep_dir.empty()) {
    if (!o.t3 || !o.dt3 || !o.dgt) throw UsageError("analyze needs --t3, --dt3 and --dgt, or --sweep PAIR_DIR");
    const MotionScenario s{*o.t3, *o.dt3, *o.dgt};
    try {
      s.validate();
    } catch (const DomainError& e) {
      throw UsageError(std::string("invalid scenario: ") + e.what());
    }
    const SupervisionTarget t = supervision_target(s);
    out << to_string(t.label) << ", ";
    if (t.depth) out << "target " << format_target(*t.depth) << "\n";
    else out << "target diverges (depth grows without bound)\n";
    return kExitOk;
  }
  const RenderedPair pair = import_pair(o.sweep_dir);
  const int h = pair.height(), w = pair.width();
  BinaryMask region(h, w, 1.0);
  std::string label = to_string(MotionCase::Static).data();
  const VectorField3* motion = nullptr;
  VectorField3 motion_map;
  if (o.object_id >= 0) {
    const auto it = std::find_if(pair.instances_t.begin(), pair.instances_t.end(),
                                 [&](const Instance& i) { return i.id == o.object_id; });
    if (it == pair.instances_t.end()) throw UsageError("--object " + std::to_string(o.object_id) + ": no such instance");
    region = it->mask;
    double dt3 = 0.0;
    for (const RigidMotion6DoF& r : pair.rigids)
      if (r.id == o.object_id) dt3 = r.motion.translation.z();
    const double t3 = pair.ego.translation.z();
    if (t3 < 0.0) {
      MotionScenario s{t3, dt3, masked_median(pair.depth_t, region)};
      label = to_string(supervision_target(s).label).data();
    } else {
      label = dt3 == 0.0 ? "STATIC" : "UNCLASSIFIED";
    }
  }
  if (o.with_motion) {
    motion_map = compose_object_motion(backproject_depth(pair.K, pair.depth_t), pair.instances_t, pair.rigids,
                                       pair.deformation);
    motion = &motion_map;
    label = "MOTION_COMPENSATED";
  }
  const double d_gt = masked_median(pair.depth_t, region);
  SweepConfig sweep = default_sweep(d_gt);
  if (o.dmin) sweep.depth_min = *o.dmin;
  if (o.dmax) sweep.depth_max = *o.dmax;
  sweep.samples = o.samples;
  const PoseSE3 ego = pose_from_euler(pair.ego);
  const SweepInput input{pair.image_t, pair.image_s, region, pair.K, ego, motion, 0.85};
  DepthLossCurve curve = loss_depth_sweep(input, sweep, d_gt);
  curve.case_label = label;
  const std::string csv = curve_csv(curve);
  if (!o.csv_path.empty()) write_file(o.csv_path, csv);
  else out << csv;
  out << label << ", argmin " << format_number(curve.argmin_depth) << " m, d_gt " << format_number(d_gt)
      << " m, step " << format_number(curve.step()) << " m\n";
  return kExitOk;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
  std::string pair_dir, out_dir;
  bool baseline = false, full = false, oracle = false;
  std::string schedule, weights;
  double init_depth = 10.0;
  double lambda_def = 0.0;
};

/// Per-object summary against the pair's ground truth.
json object_report(const FitState& s, const RenderedPair& pair, const FitInput& in) {
  const ScalarField depth = s.depth();
  const double scale = masked_median(pair.depth_t, BinaryMask(pair.height(), pair.width(), 1.0)) /
                       masked_median(depth, BinaryMask(pair.height(), pair.width(), 1.0));
  json objs = json::array();
  for (const Instance& inst : in.instances_t) {
    if (mask_count(inst.mask) == 0) continue;
    json o{{"id", inst.id}};
    const double pred = masked_median(depth, inst.mask) * scale;
    const double gt = masked_median(pair.depth_t, inst.mask);
    o["median_depth_pred_scaled"] = pred;
    o["median_depth_gt"] = gt;
    o["depth_ratio"] = pred / gt;
    ScalarField scaled = depth;
    for (double& d : scaled.data()) d *= scale;
    o["abs_rel"] = depth_metrics(scaled, pair.depth_t, inst.mask, false).abs_rel;
    o["dynamic"] = s.rigids.count(inst.id) > 0;
    if (s.rigids.count(inst.id)) {
      const Eigen::Vector3d t = s.rigids.at(inst.id).translation * scale;
      o["translation_pred_scaled"] = {t.x(), t.y(), t.z()};
    }
    for (const RigidMotion6DoF& r : pair.rigids)
      if (r.id == inst.id)
        o["translation_gt"] = {r.motion.translation.x(), r.motion.translation.y(), r.motion.translation.z()};
    objs.push_back(o);
  }
  return json{{"median_scale", scale}, {"objects", objs}};
}

std::string report_text(const std::string& title, const json& rep) {
  std::ostringstream s;
  s << title << " (median scale " << format_number(rep["median_scale"].get<double>()) << ")\n";
  for (const json& o : rep["objects"]) {
    s << "  object " << o["id"].get<int>() << ": depth pred " << format_number(o["median_depth_pred_scaled"].get<double>())
      << " m vs gt " << format_number(o["median_depth_gt"].get<double>()) << " m (ratio "
      << format_number(o["depth_ratio"].get<double>()) << ", abs_rel " << format_number(o["abs_rel"].get<double>())
      << ")";
    if (o.contains("translation_pred_scaled")) {
      const auto& t = o["translation_pred_scaled"];
      s << ", t_rig (" << format_number(t[0].get<double>()) << ", " << format_number(t[1].get<double>()) << ", "
        << format_number(t[2].get<double>()) << ")";
    } else {
      s << ", static";
    }
    if (o.contains("translation_gt")) {
      const auto& t = o["translation_gt"];
      s << " gt (" << format_number(t[0].get<double>()) << ", " << format_number(t[1].get<double>()) << ", "
        << format_number(t[2].get<double>()) << ")";
    }
    s << "\n";
  }
  return s.str();
}

int cmd_fit(const FitOptions& o, std::ostream& out) {
  const RenderedPair pair = import_pair(o.pair_dir);
  const FitInput input = fit_input(pair);
  FitConfig cfg;
  cfg.initial_depth = o.init_depth;
  cfg.lambda_def = o.lambda_def;
  if (!o.schedule.empty()) apply_schedule_json(cfg.schedule, read_json_arg(o.schedule, "--schedule"));
  if (!o.weights.empty()) cfg.weights = weights_from_json(read_json_arg(o.weights, "--weights"));
  const fs::path root(o.out_dir);

  if (o.oracle) {
    FitResult r;
    r.state = ground_truth_state(pair);
    save_fit(r, root);
    out << "wrote ground-truth state to " << root.string() << "\n";
    return kExitOk;
  }
  std::vector<std::pair<std::string, int>> runs;
  if (o.baseline) runs.push_back({"baseline", 1});
  if (o.full || !o.baseline) runs.push_back({"full", 4});
  std::string comparison;
  for (const auto& [name, stages] : runs) {
    cfg.stage_count = stages;
    const fs::path dir = runs.size() > 1 ? root / name : root;
    const FitResult r = fit_staged(input, cfg);
    save_fit(r, dir);
    json rep = object_report(r.state, pair, input);
    rep["mode"] = name;
    rep["schedule"] = schedule_json(cfg.schedule);
    json stages_json = json::array();
    for (const StageReport& s : r.stages)
      stages_json.push_back({{"stage", s.stage},
                             {"name", s.name},
                             {"iterations", s.iterations},
                             {"final_total", std::isfinite(s.final_total) ? json(s.final_total) : json(nullptr)},
                             {"object_region_loss",
                              std::isfinite(s.object_region_loss) ? json(s.object_region_loss) : json(nullptr)},
                             {"dynamic_ids", s.dynamic_ids},
                             {"static_ids", s.static_ids}});
    rep["stages"] = stages_json;
    write_file(dir / "report.json", rep.dump(2) + "\n");
    const std::string text = report_text(name, rep);
    write_file(dir / "report.txt", text);
    comparison += text;
    out << text;
  }
  if (runs.size() > 1) write_file(root / "comparison.txt", comparison);
  return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string& fit_dir, const std::string& pair_dir, const std::string& task, bool median_scale,
             const std::string& csv_path, std::ostream& out) {
  if (task != "depth" && task != "flow" && task != "sceneflow")
    throw UsageError("--task must be depth, flow or sceneflow");
  const RenderedPair pair = import_pair(pair_dir);
  for (const char* name : {"depth_t.pfm", "flow.pfm", "mask_valid.pfm", "mask_noc.pfm", "warped_depth.pfm"})
    if (!fs::exists(fs::path(pair_dir) / name))
      throw UsageError(std::string("missing ground truth: ") + (fs::path(pair_dir) / name).string());
  const FitState state = load_fit_state(fit_dir);
  if (!state.log_depth.same_shape(pair.depth_t)) throw UsageError("fit and pair dimensions differ");
  const int h = pair.height(), w = pair.width();
  const auto [fg, bg] = fg_bg_split(pair.instances_t, h, w);
  const ScalarField depth = state.depth();
  std::string csv;
  if (task == "depth") {
    const BinaryMask all(h, w, 1.0);
    const DepthMetrics m = depth_metrics(depth, pair.depth_t, all, median_scale);
    out << "all pixels\n" << depth_metrics_table(m);
    csv = "region," + depth_metrics_csv(m).substr(0, depth_metrics_csv(m).find('\n')) + "\n";
    auto row = [&](const char* name, const DepthMetrics& d) {
      const std::string body = depth_metrics_csv(d);
      csv += std::string(name) + "," + body.substr(body.find('\n') + 1);
    };
    row("all", m);
    for (const auto& [name, region] : {std::pair<const char*, const BinaryMask*>{"bg", &bg}, {"fg", &fg}}) {
      if (mask_count(*region) == 0) continue;
      const DepthMetrics d = depth_metrics(depth, pair.depth_t, *region, median_scale);
      out << name << " pixels\n" << depth_metrics_table(d);
      row(name, d);
    }
  } else {
    const CorrespondenceMap corr = state_correspondence(state, pair.K, pair.instances_t);
    FlowField flow(h, w);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        flow(v, u, 0) = corr.u_s(v, u) - u;
        flow(v, u, 1) = corr.v_s(v, u) - v;
      }
    if (task == "flow") {
      const FlowReport r = flow_epe(flow, pair.flow, pair.valid, pair.noc, fg);
      out << flow_report_table(r);
      csv = flow_report_csv(r);
    } else {
      const double scale = median_scale ? masked_median(pair.depth_t, pair.valid) / masked_median(depth, pair.valid) : 1.0;
      SceneFlowFields pred{ScalarField(h, w), ScalarField(h, w), flow};
      ScalarField d0 = depth, d1 = corr.d_s;
      for (double& d : d0.data()) d *= scale;
      for (double& d : d1.data()) d *= scale;
      pred.d0 = disparity_proxy(d0, pair.K.fx);
      pred.d1 = disparity_proxy(d1, pair.K.fx);
      const SceneFlowFields gt{disparity_proxy(pair.depth_t, pair.K.fx), disparity_proxy(pair.warped_depth, pair.K.fx),
                               pair.flow};
      const SceneFlowReport r = sceneflow_outliers(pred, gt, pair.valid);
      out << sceneflow_report_table(r);
      csv = sceneflow_report_csv(r);
    }
  }
  if (!csv_path.empty()) write_file(csv_path, csv);
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::string& blocks_arg, std::uint64_t seed, int samples, const std::string& corrupt,
                  std::ostream& out) {
  std::vector<Block> blocks;
  if (blocks_arg == "all") {
    blocks.assign(kAllBlocks.begin(), kAllBlocks.end());
  } else {
    std::stringstream ss(blocks_arg);
    std::string item;
    while (std::getline(ss, item, ','))
      try {
        blocks.push_back(block_from_string(item));
      } catch (const ContractError& e) {
        throw UsageError(e.what());
      }
    if (blocks.empty()) throw UsageError("--blocks: empty list");
  }
  GradCheckOptions opt;
  opt.seed = seed;
  opt.samples = samples;
  if (!corrupt.empty()) {
    try {
      opt.corrupt = block_from_string(corrupt);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  const RenderedPair pair = render_pair(gradcheck_scene(seed));
  const FitState state = perturbed_state(pair, seed);
  ObjectiveConfig cfg;
  cfg.lambda_def = 0.1;
  const FitInput input = fit_input(pair);
  std::vector<std::string> failed;
  for (Block b : blocks) {
    const GradCheckResult r = gradient_check(state, input, cfg, b, opt);
    const bool ok = r.max_rel_error < 1e-4;
    out << (ok ? "PASS " : "FAIL ") << to_string(b) << " max_rel_error=" << format_number(r.max_rel_error)
        << " samples=" << r.samples << "\n";
    if (!ok) failed.push_back(to_string(b));
  }
  if (!failed.empty()) {
    std::string list;
    for (const std::string& f : failed) list += (list.empty() ? "" : ", ") + f;
    throw NumericalFailure("gradient check failed for: " + list);
  }
  return kExitOk;
}

}  // namespace

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string s = "stage,iteration,L_ph,L_ds,L_m,total\n";
  for (const HistoryRow& r : rows)
    s += std::to_string(r.stage) + "," + std::to_string(r.iteration) + "," + format_number(r.components.photometric) +
         "," + format_number(r.components.smoothness) + "," + format_number(r.components.mask) + "," +
         format_number(r.total) + "\n";
  return s;
}

void save_fit(const FitResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  const FitState& s = result.state;
  write_file(dir / "log_depth.pfm", write_pfm(s.log_depth));
  write_file(dir / "depth.pfm", write_pfm(s.depth()));
  write_file(dir / "deformation.pfm", write_pfm(s.deformation));
  json rigids = json::array();
  for (const auto& [id, m] : s.rigids) rigids.push_back({{"id", id}, {"motion", euler_to_json(m)}});
  const json poses{{"ego", euler_to_json(s.ego)}, {"rigids", rigids}};
  write_file(dir / "poses.json", poses.dump(2) + "\n");
  write_file(dir / "history.csv", history_csv(result.history));
}

FitState load_fit_state(const fs::path& dir) {
  for (const char* name : {"log_depth.pfm", "deformation.pfm", "poses.json"})
    if (!fs::exists(dir / name)) throw UsageError("fit result incomplete: missing " + (dir / name).string());
  FitState s;
  s.log_depth = read_pfm<ScalarField>(read_file(dir / "log_depth.pfm"));
  s.deformation = read_pfm<VectorField3>(read_file(dir / "deformation.pfm"));
  const json poses = json::parse(read_file(dir / "poses.json"));
  s.ego = euler_from_json(poses.at("ego"), "ego");
  for (const json& r : poses.at("rigids")) s.rigids[r.at("id").get<int>()] = euler_from_json(r.at("motion"), "rigids");
  return s;
}

CorrespondenceMap state_correspondence(const FitState& state, const Intrinsics& K, const InstanceSet& instances) {
  const ScalarField depth = state.depth();
  const InstanceSet dyn = dynamic_instances(instances, state);
  std::vector<RigidMotion6DoF> rigids;
  for (const Instance& i : dyn) rigids.push_back({i.id, state.rigids.at(i.id)});
  const VectorField3 motion = compose_object_motion(backproject_depth(K, depth), dyn, rigids, state.deformation);
  return project_correspondence(depth, K, pose_from_euler(state.ego), motion);
}

SceneSpec gradcheck_scene(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.ego.yaw = 0.02;
  s.ego.translation = {0.1, 0.0, -1.0};
  s.background.depth = 20.0;
  s.background.normal = Eigen::Vector3d(0.0, -0.2, -1.0).normalized();
  ObjectSpec box;
  box.id = 1;
  box.shape = ObjectShape::Box;
  box.size = {3.0, 2.0, 2.0};
  box.pose.yaw = 0.3;
  box.pose.translation = {0.5, 0.3, 9.0};
  box.motion.yaw = 0.02;
  box.motion.translation = {0.3, 0.0, 0.8};
  box.deformation = DeformationSpec{0.05, 0.5};
  box.texture_seed = 7;
  s.objects.push_back(box);
  return s;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic-object depth toolkit: synthetic pairs, analysis, staged fitting, evaluation"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  std::optional<std::uint64_t> seed;
  auto* gen = app.add_subcommand("scene-gen", "Render a scene spec into a pair directory");
  gen->add_option("spec", spec_path, "Scene spec JSON")->required();
  gen->add_option("out_dir", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the spec's texture seed");

  AnalyzeOptions an;
  auto* ana = app.add_subcommand("analyze", "Classify a motion scenario or sweep depth over a pair");
  ana->add_option("--t3", an.t3, "Ego z-translation (negative = forward)");
  ana->add_option("--dt3", an.dt3, "Object z-translation");
  ana->add_option("--dgt", an.dgt, "True depth (m)");
  ana->add_option("--sweep", an.sweep_dir, "Pair directory for a photometric depth sweep");
  ana->add_option("--object", an.object_id, "Restrict the sweep to one instance id");
  ana->add_option("--dmin", an.dmin, "Sweep start (m)");
  ana->add_option("--dmax", an.dmax, "Sweep end (m)");
  ana->add_option("--samples", an.samples, "Sweep sample count");
  ana->add_option("--csv", an.csv_path, "Write the curve CSV here instead of stdout");
  ana->add_flag("--with-motion", an.with_motion, "Warp with the ground-truth object motion");

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "Staged direct fitting on a pair directory");
  fit->add_option("pair_dir", fo.pair_dir, "Pair directory")->required();
  fit->add_option("out_dir", fo.out_dir, "Output directory")->required();
  fit->add_flag("--baseline", fo.baseline, "Stage 1 only (static-scene assumption)");
  fit->add_flag("--full", fo.full, "All four stages (default)");
  fit->add_option("--schedule", fo.schedule, "Schedule JSON file or inline object");
  fit->add_option("--weights", fo.weights, "Loss weights JSON file or inline object");
  fit->add_option("--init-depth", fo.init_depth, "Initial constant depth (m)");
  fit->add_option("--lambda-def", fo.lambda_def, "Deformation magnitude penalty");
  fit->add_flag("--oracle", fo.oracle, "Write the ground-truth state instead of fitting")->group("");

  std::string fit_dir, pair_dir, task, csv_path;
  bool no_median = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a fit against a pair's ground truth");
  ev->add_option("fit_dir", fit_dir, "Fit result directory")->required();
  ev->add_option("pair_dir", pair_dir, "Pair directory")->required();
  ev->add_option("--task", task, "depth | flow | sceneflow")->required();
  ev->add_flag("--no-median-scale", no_median, "Evaluate depth without median scaling");
  ev->add_option("--csv", csv_path, "Also write the table as CSV");

  std::string blocks = "all", corrupt;
  std::uint64_t gseed = 0;
  int samples = 8;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter block");
  gc->add_option("--blocks", blocks, "all or a comma list of log_depth,ego,rigid,deformation");
  gc->add_option("--seed", gseed, "Scene and sampling seed");
  gc->add_option("--samples", samples, "Coordinates per block");
  gc->add_option("--corrupt", corrupt, "Test hook: corrupt one block's analytic gradient")->group("");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_scene_gen(spec_path, out_dir, seed, out);
    if (ana->parsed()) return cmd_analyze(an, out);
    if (fit->parsed()) return cmd_fit(fo, out);
    if (ev->parsed()) return cmd_eval(fit_dir, pair_dir, task, !no_median, csv_path, out);
    if (gc->parsed()) return cmd_gradcheck(blocks, gseed, samples, corrupt, out);
  } catch (const NumericalFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DegenerateInputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace do3d
