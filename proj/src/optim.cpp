#include "do3d/optim.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "do3d/errors.hpp"
#include "do3d/parallel.hpp"

namespace do3d {
namespace {

using Mat3d = Eigen::Matrix3d;
using AD3 = Eigen::AutoDiffScalar<Eigen::Vector3d>;

/// Rotation and its derivatives w.r.t. (pitch, roll, yaw).
struct RotationJet {
  Mat3d R;
  std::array<Mat3d, 3> dR;
};

RotationJet rotation_jet(const EulerPose& e) {
  const AD3 pitch(e.pitch, 3, 0), roll(e.roll, 3, 1), yaw(e.yaw, 3, 2);
  const Mat3<AD3> r = rotation_from_euler<AD3>(pitch, roll, yaw);
  RotationJet jet;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      jet.R(i, j) = r(i, j).value();
      for (int k = 0; k < 3; ++k) jet.dR[k](i, j) = r(i, j).derivatives()[k];
    }
  }
  return jet;
}

struct ObjectMotion {
  int id = 0;
  RotationJet rot;
  Eigen::Vector3d t;
};

/// Per-evaluation geometry shared by all pixels.
struct Setup {
  RotationJet ego;
  Eigen::Vector3d ego_t;
  std::vector<ObjectMotion> objects;
  Grid<int, 1, ScalarTag> owner;  // index into objects, -1 = static
  BinaryMask target_mask;
  BinaryMask source_mask;
};

Setup make_setup(const FitState& s, const FitInput& in) {
  const int h = in.height(), w = in.width();
  Setup st;
  st.ego = rotation_jet(s.ego);
  st.ego_t = s.ego.translation;
  st.owner = Grid<int, 1, ScalarTag>(h, w, -1);
  for (const Instance& inst : in.instances_t) {
    const auto it = s.rigids.find(inst.id);
    if (it == s.rigids.end()) continue;
    const int k = static_cast<int>(st.objects.size());
    st.objects.push_back(ObjectMotion{inst.id, rotation_jet(it->second), it->second.translation});
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        if (inst.mask(v, u) > 0.5 && st.owner(v, u) < 0) st.owner(v, u) = k;
  }
  st.target_mask = instance_union(in.instances_t, h, w);
  st.source_mask = instance_union(in.instances_s, h, w);
  return st;
}

struct PixelGeometry {
  bool projected = false;
  double u_s = 0.0, v_s = 0.0;
  Eigen::Vector3d X, Z, Y, Xs;
};

PixelGeometry pixel_geometry(const FitState& s, const FitInput& in, const Setup& st, int v, int u) {
  PixelGeometry g;
  const double d = std::exp(s.log_depth(v, u));
  g.X = backproject_ray<double>(in.K, u, v, d);
  const int k = st.owner(v, u);
  if (k >= 0) {
    g.Z = g.X + s.deformation.pixel(v, u);
    g.Y = st.objects[k].rot.R * g.Z + st.objects[k].t;
  } else {
    g.Z = g.X;
    g.Y = g.X;
  }
  g.Xs = st.ego.R * g.Y + st.ego_t;
  g.u_s = u;
  g.v_s = v;
  double us = 0.0, vs = 0.0;
  if (project_point(in.K, g.Xs, us, vs)) {
    g.projected = true;
    g.u_s = us;
    g.v_s = vs;
  }
  return g;
}

BinaryMask intersect(const BinaryMask& a, const std::optional<BinaryMask>& region) {
  if (!region) return a;
  require_same_shape(a, *region, "objective region");
  return mask_and(a, *region);
}

struct Forward {
  Evaluation eval;
  std::vector<PixelGeometry> geo;
  std::vector<Sample<ColorImage>> image_samples;
  std::vector<Sample<BinaryMask>> mask_samples;
  BinaryMask loss_valid;
  BinaryMask m_hat;
};

Forward forward(const FitState& s, const FitInput& in, const ObjectiveConfig& cfg, const Setup& st) {
  const int h = in.height(), w = in.width();
  if (!s.log_depth.same_shape(in.image_t) || !s.deformation.same_shape(in.image_t))
    throw ContractError("fit state and input dimensions differ");
  Forward f;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  f.geo.resize(n);
  f.image_samples.resize(n);
  f.mask_samples.resize(n);
  Evaluation& e = f.eval;
  e.synthesized = ColorImage(h, w);
  e.valid = BinaryMask(h, w);
  e.u_s = ScalarField(h, w);
  e.v_s = ScalarField(h, w);
  f.m_hat = BinaryMask(h, w);
  parallel_rows(h, [&](int v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * w + u;
      f.geo[i] = pixel_geometry(s, in, st, v, u);
      const PixelGeometry& g = f.geo[i];
      e.u_s(v, u) = g.u_s;
      e.v_s(v, u) = g.v_s;
      f.image_samples[i] = bilinear_sample(in.image_s, g.u_s, g.v_s);
      f.mask_samples[i] = bilinear_sample(st.source_mask, g.u_s, g.v_s);
      e.synthesized.pixel(v, u) = f.image_samples[i].value;
      f.m_hat(v, u) = f.mask_samples[i].value[0];
      e.valid(v, u) = (g.projected && f.image_samples[i].valid) ? 1.0 : 0.0;
    }
  });
  f.loss_valid = intersect(e.valid, cfg.region);
  e.valid_count = mask_count(f.loss_valid);
  return f;
}

double deformation_penalty(const FitState& s, const Setup& st, VectorField3* grad, double scale) {
  std::vector<double> terms;
  for (std::size_t i = 0; i < st.owner.pixel_count(); ++i)
    if (st.owner.data()[i] >= 0) terms.push_back(Eigen::Map<const Eigen::Vector3d>(s.deformation.data().data() + 3 * i).squaredNorm());
  if (terms.empty()) return 0.0;
  const double count = static_cast<double>(terms.size());
  if (grad != nullptr)
    for (std::size_t i = 0; i < st.owner.pixel_count(); ++i)
      if (st.owner.data()[i] >= 0)
        for (int c = 0; c < 3; ++c) grad->data()[3 * i + c] += scale * 2.0 * s.deformation.data()[3 * i + c] / count;
  return pairwise_sum(terms) / count;
}

}  // namespace

std::string to_string(Block b) {
  switch (b) {
    case Block::LogDepth: return "log_depth";
    case Block::Ego: return "ego";
    case Block::Rigid: return "rigid";
    case Block::Deformation: return "deformation";
  }
  return "?";
}

Block block_from_string(const std::string& name) {
  if (name == "log_depth" || name == "depth") return Block::LogDepth;
  if (name == "ego") return Block::Ego;
  if (name == "rigid") return Block::Rigid;
  if (name == "deformation") return Block::Deformation;
  throw ContractError("unknown parameter block '" + name + "'");
}

FitInput fit_input(const RenderedPair& pair) {
  return FitInput{pair.K, pair.image_t, pair.image_s, pair.instances_t, pair.instances_s};
}

ScalarField FitState::depth() const {
  ScalarField d(log_depth.height(), log_depth.width());
  for (std::size_t i = 0; i < d.pixel_count(); ++i) d.data()[i] = std::exp(log_depth.data()[i]);
  return d;
}

FitState initial_state(int height, int width, double depth) {
  if (!(depth >= kMinFitDepth && depth <= kMaxFitDepth))
    throw DomainError("initial depth must lie in [" + std::to_string(kMinFitDepth) + ", " +
                      std::to_string(kMaxFitDepth) + "]");
  FitState s;
  s.log_depth = ScalarField(height, width, std::log(depth));
  s.deformation = VectorField3(height, width);
  return s;
}

FitState ground_truth_state(const RenderedPair& pair) {
  FitState s;
  s.log_depth = ScalarField(pair.height(), pair.width());
  for (std::size_t i = 0; i < s.log_depth.pixel_count(); ++i) s.log_depth.data()[i] = std::log(pair.depth_t.data()[i]);
  s.ego = pair.ego;
  for (const RigidMotion6DoF& r : pair.rigids) s.rigids[r.id] = r.motion;
  s.deformation = pair.deformation;
  return s;
}

Eigen::VectorXd get_block(const FitState& s, Block b) {
  switch (b) {
    case Block::LogDepth:
      return Eigen::Map<const Eigen::VectorXd>(s.log_depth.data().data(), static_cast<Eigen::Index>(s.log_depth.pixel_count()));
    case Block::Ego:
      return to_vector(s.ego);
    case Block::Rigid: {
      Eigen::VectorXd out(6 * static_cast<Eigen::Index>(s.rigids.size()));
      Eigen::Index k = 0;
      for (const auto& [id, m] : s.rigids) out.segment<6>(6 * k++) = to_vector(m);
      return out;
    }
    case Block::Deformation:
      return Eigen::Map<const Eigen::VectorXd>(s.deformation.data().data(),
                                               3 * static_cast<Eigen::Index>(s.deformation.pixel_count()));
  }
  return {};
}

void set_block(FitState& s, Block b, const Eigen::VectorXd& x) {
  const Eigen::Index want = get_block(s, b).size();
  if (x.size() != want) throw ContractError("block " + to_string(b) + " expects " + std::to_string(want) + " values");
  switch (b) {
    case Block::LogDepth:
      std::copy(x.data(), x.data() + x.size(), s.log_depth.data().begin());
      break;
    case Block::Ego:
      s.ego = euler_from_vector(x);
      break;
    case Block::Rigid: {
      Eigen::Index k = 0;
      for (auto& [id, m] : s.rigids) m = euler_from_vector(x.segment<6>(6 * k++));
      break;
    }
    case Block::Deformation:
      std::copy(x.data(), x.data() + x.size(), s.deformation.data().begin());
      break;
  }
}

Evaluation evaluate(const FitState& state, const FitInput& input, const ObjectiveConfig& config) {
  return loss_and_gradients(state, input, config, {}).eval;
}

LossGradients loss_and_gradients(const FitState& state, const FitInput& input, const ObjectiveConfig& cfg,
                                 const std::set<Block>& requested) {
  cfg.weights.validate();
  const int h = input.height(), w = input.width();
  const Setup st = make_setup(state, input);
  Forward f = forward(state, input, cfg, st);
  Evaluation& e = f.eval;
  if (e.valid_count == 0) throw DegenerateInputError("no valid pixels in the objective");

  auto active = [&](Block b) { return requested.count(b) > 0 && !state.is_frozen(b); };
  const bool any_active = std::any_of(kAllBlocks.begin(), kAllBlocks.end(), active);

  ColorImage d_pred;
  BinaryMask d_mhat;
  if (cfg.photometric) {
    if (any_active) {
      PhotometricGradient pg = photometric_loss_with_gradient(e.synthesized, input.image_t, f.loss_valid, cfg.weights.alpha);
      e.components.photometric = pg.loss;
      d_pred = std::move(pg.d_pred);
    } else {
      e.components.photometric = photometric_loss(e.synthesized, input.image_t, f.loss_valid, cfg.weights.alpha);
    }
  }
  SmoothnessGradient sg;
  if (cfg.smoothness) {
    sg = smoothness_loss_with_gradient(state.depth(), input.image_t);
    e.components.smoothness = sg.loss;
  }
  if (cfg.mask) {
    MaskLossGradient mg = mask_loss_with_gradient(f.m_hat, st.target_mask, f.loss_valid);
    e.components.mask = mg.loss;
    d_mhat = std::move(mg.d_m_hat);
  }
  LossGradients out;
  VectorField3 d_def;
  if (active(Block::Deformation)) d_def = VectorField3(h, w);
  e.deformation_penalty = cfg.lambda_def > 0.0
                              ? deformation_penalty(state, st, active(Block::Deformation) ? &d_def : nullptr, cfg.lambda_def)
                              : 0.0;
  e.total = total_loss(e.components, cfg.weights) + cfg.lambda_def * e.deformation_penalty;
  if (!any_active) {
    out.eval = std::move(e);
    return out;
  }

  const double w_ph = cfg.photometric ? cfg.weights.w_ph : 0.0;
  const double w_m = cfg.mask ? cfg.weights.w_m : 0.0;
  const std::size_t n_obj = st.objects.size();
  ScalarField d_logd;
  if (active(Block::LogDepth)) d_logd = ScalarField(h, w);
  std::vector<Vector6d> ego_rows(h, Vector6d::Zero());
  std::vector<std::vector<Vector6d>> rig_rows(h, std::vector<Vector6d>(n_obj, Vector6d::Zero()));

  parallel_rows(h, [&](int v) {
    for (int u = 0; u < w; ++u) {
      const std::size_t i = static_cast<std::size_t>(v) * w + u;
      const PixelGeometry& g = f.geo[i];
      if (!g.projected) continue;
      double gu = 0.0, gv = 0.0;
      if (w_ph != 0.0) {
        const auto dp = d_pred.pixel(v, u);
        gu += w_ph * dp.dot(f.image_samples[i].d_dx);
        gv += w_ph * dp.dot(f.image_samples[i].d_dy);
      }
      if (w_m != 0.0) {
        gu += w_m * d_mhat(v, u) * f.mask_samples[i].d_dx[0];
        gv += w_m * d_mhat(v, u) * f.mask_samples[i].d_dy[0];
      }
      if (gu == 0.0 && gv == 0.0) continue;
      const double z = g.Xs.z();
      const Eigen::Vector3d gx(input.K.fx * gu / z, input.K.fy * gv / z,
                               -(input.K.fx * gu * g.Xs.x() + input.K.fy * gv * g.Xs.y()) / (z * z));
      const int k = st.owner(v, u);
      const Eigen::Vector3d g_y = st.ego.R.transpose() * gx;  // dL/dY
      if (active(Block::LogDepth)) {
        const Eigen::Vector3d dy = k >= 0 ? Eigen::Vector3d(st.objects[k].rot.R * g.X) : g.X;
        d_logd(v, u) += g_y.dot(dy);
      }
      if (active(Block::Ego)) {
        for (int r = 0; r < 3; ++r) ego_rows[v][r] += gx.dot(st.ego.dR[r] * g.Y);
        ego_rows[v].tail<3>() += gx;
      }
      if (k >= 0 && active(Block::Rigid)) {
        for (int r = 0; r < 3; ++r) rig_rows[v][k][r] += g_y.dot(st.objects[k].rot.dR[r] * g.Z);
        rig_rows[v][k].tail<3>() += g_y;
      }
      if (k >= 0 && active(Block::Deformation))
        d_def.pixel(v, u) += st.objects[k].rot.R.transpose() * g_y;
    }
  });

  if (active(Block::LogDepth)) {
    if (cfg.smoothness)
      for (std::size_t i = 0; i < d_logd.pixel_count(); ++i)
        d_logd.data()[i] += cfg.weights.w_ds * sg.d_depth.data()[i] * std::exp(state.log_depth.data()[i]);
    out.grad[0] = Eigen::Map<const Eigen::VectorXd>(d_logd.data().data(), static_cast<Eigen::Index>(d_logd.pixel_count()));
  }
  if (active(Block::Ego)) {
    Vector6d g = Vector6d::Zero();
    for (const Vector6d& r : ego_rows) g += r;
    out.grad[1] = g;
  }
  if (active(Block::Rigid)) {
    // Gradient entries follow the id order of state.rigids; objects with no
    // target pixels get zero.
    out.grad[2] = Eigen::VectorXd::Zero(6 * static_cast<Eigen::Index>(state.rigids.size()));
    Eigen::Index slot = 0;
    for (const auto& [id, m] : state.rigids) {
      for (std::size_t k = 0; k < n_obj; ++k) {
        if (st.objects[k].id != id) continue;
        Vector6d g = Vector6d::Zero();
        for (int v = 0; v < h; ++v) g += rig_rows[v][k];
        out.grad[2].segment<6>(6 * slot) = g;
      }
      ++slot;
    }
  }
  if (active(Block::Deformation))
    out.grad[3] = Eigen::Map<const Eigen::VectorXd>(d_def.data().data(), 3 * static_cast<Eigen::Index>(d_def.pixel_count()));
  out.eval = std::move(e);
  return out;
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0.0)) throw DomainError("learning rate must be non-negative");
}

void Adam::step(const std::string& slot, Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  if (x.size() != g.size()) throw ContractError("Adam: gradient size mismatch for " + slot);
  auto& [m, v] = moments_[slot];
  if (m.size() != x.size()) {
    m = Eigen::VectorXd::Zero(x.size());
    v = Eigen::VectorXd::Zero(x.size());
  }
  const int t = ++steps_[slot];
  m = beta1_ * m + (1.0 - beta1_) * g;
  v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(beta1_, t), c2 = 1.0 - std::pow(beta2_, t);
  x.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
}

void Adam::step_shared(const std::string& slot, Eigen::Ref<Eigen::VectorXd> x,
                       const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (x.size() != g.size()) throw ContractError("Adam: gradient size mismatch for " + slot);
  auto& [m, v] = moments_[slot];
  if (m.size() != x.size()) {
    m = Eigen::VectorXd::Zero(x.size());
    v = Eigen::VectorXd::Zero(1);
  }
  const int t = ++steps_[slot];
  m = beta1_ * m + (1.0 - beta1_) * g;
  v[0] = beta2_ * v[0] + (1.0 - beta2_) * (x.size() > 0 ? g.squaredNorm() / static_cast<double>(x.size()) : 0.0);
  const double c1 = 1.0 - std::pow(beta1_, t), c2 = 1.0 - std::pow(beta2_, t);
  x.array() -= lr_ * (m.array() / c1) / (std::sqrt(v[0] / c2) + eps_);
}

PyramidField::PyramidField(int height, int width, int levels) : height_(height), width_(width) {
  if (levels < 1) throw ContractError("pyramid needs at least one level");
  offsets_.push_back(0);
  int h = height, w = width;
  std::vector<std::pair<int, int>> dims;
  for (int l = 0; l < levels; ++l) {
    dims.emplace_back(h, w);
    offsets_.push_back(offsets_.back() + static_cast<Eigen::Index>(h) * w);
    if (h == 1 && w == 1) break;
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  taps_.resize(dims.size());
  for (std::size_t l = 1; l < dims.size(); ++l) {
    const auto [lh, lw] = dims[l];
    const double sy = static_cast<double>(lh) / height, sx = static_cast<double>(lw) / width;
    taps_[l].resize(static_cast<std::size_t>(height) * width);
    for (int v = 0; v < height; ++v) {
      for (int u = 0; u < width; ++u) {
        const double y = std::clamp((v + 0.5) * sy - 0.5, 0.0, lh - 1.0);
        const double x = std::clamp((u + 0.5) * sx - 0.5, 0.0, lw - 1.0);
        const int y0 = std::min(static_cast<int>(y), std::max(lh - 2, 0)), x0 = std::min(static_cast<int>(x), std::max(lw - 2, 0));
        const int y1 = std::min(y0 + 1, lh - 1), x1 = std::min(x0 + 1, lw - 1);
        const double ay = y - y0, ax = x - x0;
        const Eigen::Index base = offsets_[l];
        taps_[l][static_cast<std::size_t>(v) * width + u] = {
            Tap{base + static_cast<Eigen::Index>(y0) * lw + x0, (1 - ay) * (1 - ax)},
            Tap{base + static_cast<Eigen::Index>(y0) * lw + x1, (1 - ay) * ax},
            Tap{base + static_cast<Eigen::Index>(y1) * lw + x0, ay * (1 - ax)},
            Tap{base + static_cast<Eigen::Index>(y1) * lw + x1, ay * ax}};
      }
    }
  }
}

ScalarField PyramidField::compose(const Eigen::VectorXd& p) const {
  if (p.size() != size()) throw ContractError("pyramid parameter size mismatch");
  ScalarField out(height_, width_);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    double v = p[static_cast<Eigen::Index>(i)];
    for (std::size_t l = 1; l < taps_.size(); ++l)
      for (const Tap& t : taps_[l][i]) v += t.weight * p[t.index];
    out.data()[i] = v;
  }
  return out;
}

Eigen::VectorXd PyramidField::pullback(const ScalarField& g) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (std::size_t i = 0; i < g.pixel_count(); ++i) {
    out[static_cast<Eigen::Index>(i)] = g.data()[i];
    for (std::size_t l = 1; l < taps_.size(); ++l)
      for (const Tap& t : taps_[l][i]) out[t.index] += t.weight * g.data()[i];
  }
  return out;
}

Eigen::VectorXd PyramidField::from_field(const ScalarField& f) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  for (std::size_t i = 0; i < f.pixel_count(); ++i) out[static_cast<Eigen::Index>(i)] = f.data()[i];
  return out;
}

void project_log_depth(FitState& s) {
  const double lo = std::log(kMinFitDepth), hi = std::log(kMaxFitDepth);
  for (std::size_t i = 0; i < s.log_depth.pixel_count(); ++i)
    s.log_depth.data()[i] = std::clamp(s.log_depth.data()[i], lo, hi);
}

GradCheckResult gradient_check(const FitState& state, const FitInput& input, const ObjectiveConfig& config,
                               Block block, const GradCheckOptions& opt) {
  GradCheckResult res;
  res.block = block;
  const LossGradients base = loss_and_gradients(state, input, config, {block});
  Eigen::VectorXd analytic = base[block];
  if (opt.corrupt && *opt.corrupt == block) analytic = analytic * 1.01 + Eigen::VectorXd::Constant(analytic.size(), 1e-3);
  if (analytic.size() == 0) return res;

  const int h = input.height(), w = input.width();
  const Setup st = make_setup(state, input);
  std::vector<Eigen::Index> candidates;
  const bool local = block == Block::LogDepth || block == Block::Deformation;
  if (local) {
    auto frac_ok = [](double x) {
      const double f = x - std::floor(x);
      return f > 0.1 && f < 0.9;
    };
    for (int v = 1; v + 1 < h; ++v)
      for (int u = 1; u + 1 < w; ++u) {
        if (base.eval.valid(v, u) <= 0.5 || !frac_ok(base.eval.u_s(v, u)) || !frac_ok(base.eval.v_s(v, u))) continue;
        if (block == Block::Deformation && st.owner(v, u) < 0) continue;
        const Eigen::Index p = static_cast<Eigen::Index>(v) * w + u;
        if (block == Block::LogDepth) candidates.push_back(p);
        else for (int c = 0; c < 3; ++c) candidates.push_back(3 * p + c);
      }
  } else {
    for (Eigen::Index k = 0; k < analytic.size(); ++k) candidates.push_back(k);
  }
  std::mt19937_64 rng(opt.seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  if (static_cast<int>(candidates.size()) > opt.samples) candidates.resize(opt.samples);

  const Eigen::VectorXd x0 = get_block(state, block);
  for (Eigen::Index k : candidates) {
    double eps = local ? opt.epsilon_local : opt.epsilon_global;
    double fd = 0.0;
    for (int attempt = 0; attempt < 30; ++attempt, eps /= 2.0) {
      FitState plus = state, minus = state;
      Eigen::VectorXd xp = x0, xm = x0;
      xp[k] += eps;
      xm[k] -= eps;
      set_block(plus, block, xp);
      set_block(minus, block, xm);
      const Evaluation ep = evaluate(plus, input, config);
      const Evaluation em = evaluate(minus, input, config);
      bool same_cells = ep.valid == em.valid;
      for (std::size_t i = 0; same_cells && i < ep.u_s.pixel_count(); ++i)
        same_cells = std::floor(ep.u_s.data()[i]) == std::floor(em.u_s.data()[i]) &&
                     std::floor(ep.v_s.data()[i]) == std::floor(em.v_s.data()[i]);
      // The L1 term has a kink wherever a residual changes sign.
      for (std::size_t i = 0; same_cells && i < ep.synthesized.data().size(); ++i) {
        if (ep.valid.data()[i / 3] <= 0.5) continue;
        const double t = input.image_t.data()[i];
        same_cells = std::signbit(ep.synthesized.data()[i] - t) == std::signbit(em.synthesized.data()[i] - t);
      }
      fd = (ep.total - em.total) / (2.0 * eps);
      if (same_cells) break;
    }
    const double ga = analytic[k];
    const double rel = std::abs(ga - fd) / (std::max(std::abs(ga), std::abs(fd)) + 1e-8);
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.samples;
  }
  return res;
}

FitState perturbed_state(const RenderedPair& pair, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  FitState s = ground_truth_state(pair);
  for (std::size_t i = 0; i < s.log_depth.pixel_count(); ++i) s.log_depth.data()[i] += 0.05 * n01(rng);
  Vector6d e = to_vector(s.ego);
  for (int k = 0; k < 6; ++k) e[k] += (k < 3 ? 0.005 : 0.02) * n01(rng);
  s.ego = euler_from_vector(e);
  for (const Instance& inst : pair.instances_t) {
    Vector6d r = s.rigids.count(inst.id) ? to_vector(s.rigids[inst.id]) : Vector6d::Zero();
    for (int k = 0; k < 6; ++k) r[k] += (k < 3 ? 0.005 : 0.02) * n01(rng);
    s.rigids[inst.id] = euler_from_vector(r);
    for (int v = 0; v < pair.height(); ++v)
      for (int u = 0; u < pair.width(); ++u)
        if (inst.mask(v, u) > 0.5)
          for (int c = 0; c < 3; ++c) s.deformation(v, u, c) += 0.01 * n01(rng);
  }
  return s;
}

StageSchedule default_schedule() {
  StageSchedule s;
  s.stages[0] = {"depth_pose", 2000, 1e-2};
  s.stages[1] = {"rigid", 1000, 4e-3};
  s.stages[2] = {"deformation", 1000, 4e-3};
  s.stages[3] = {"finetune", 1000, 1e-2};
  return s;
}

double region_photometric_loss(const FitState& state, const FitInput& input, const BinaryMask& region, double alpha) {
  ObjectiveConfig cfg;
  cfg.smoothness = false;
  cfg.mask = false;
  cfg.weights.alpha = alpha;
  const Setup st = make_setup(state, input);
  const Forward f = forward(state, input, cfg, st);
  const BinaryMask m = mask_and(f.eval.valid, region);
  if (mask_count(m) == 0) return std::numeric_limits<double>::quiet_NaN();
  return photometric_loss(f.eval.synthesized, input.image_t, m, alpha);
}

namespace {

ColorImage synthesize(const FitState& s, const FitInput& in) {
  ObjectiveConfig cfg;
  cfg.smoothness = false;
  cfg.mask = false;
  const Setup st = make_setup(s, in);
  return forward(s, in, cfg, st).eval.synthesized;
}

BinaryMask boxes_region(const FitInput& in, const std::map<int, EulerPose>& rigids) {
  BinaryMask region(in.height(), in.width());
  for (const Instance& inst : in.instances_t) {
    if (!rigids.count(inst.id)) continue;
    const auto box = mask_bbox(inst.mask);
    if (!box) continue;
    region = mask_or(region, box_mask(in.height(), in.width(), enlarge_bbox(*box, in.height(), in.width())));
  }
  return region;
}

void validate_fit_config(const FitConfig& c) {
  c.weights.validate();
  if (c.stage_count != 1 && c.stage_count != 4) throw ContractError("stage_count must be 1 or 4");
  for (const StageConfig& s : c.schedule.stages) {
    if (s.iterations < 0) throw ContractError("stage '" + s.name + "': iterations must be non-negative");
    if (!(s.learning_rate >= 0.0)) throw ContractError("stage '" + s.name + "': learning rate must be non-negative");
  }
  if (c.depth_levels < 1) throw ContractError("depth_levels must be at least 1");
  if (!(c.lambda_def >= 0.0)) throw ContractError("lambda_def must be non-negative");
  for (double k : c.block_lr_scale)
    if (!(k >= 0.0)) throw ContractError("block learning-rate scales must be non-negative");
}

}  // namespace

FitResult fit_staged(const FitInput& input, const FitConfig& config) {
  validate_fit_config(config);
  const int h = input.height(), w = input.width();
  FitResult result;
  FitState& s = result.state;
  s = initial_state(h, w, config.initial_depth);
  const BinaryMask objects = instance_union(input.instances_t, h, w);
  const double alpha = config.weights.alpha;

  auto run_stage = [&](int index, const std::set<Block>& blocks, const ObjectiveConfig& obj) {
    const StageConfig& sc = config.schedule.stages[index - 1];
    for (Block b : kAllBlocks) s.set_frozen(b, blocks.count(b) == 0);
    const PyramidField pyramid(h, w, config.depth_levels);
    Eigen::VectorXd depth_params;
    if (blocks.count(Block::LogDepth)) depth_params = pyramid.from_field(s.log_depth);
    std::array<Adam, 4> adam{Adam(sc.learning_rate * config.block_lr_scale[0]),
                             Adam(sc.learning_rate * config.block_lr_scale[1]),
                             Adam(sc.learning_rate * config.block_lr_scale[2]),
                             Adam(sc.learning_rate * config.block_lr_scale[3])};
    for (int it = 0; it < sc.iterations; ++it) {
      const LossGradients lg = loss_and_gradients(s, input, obj, blocks);
      if (!std::isfinite(lg.eval.total)) throw DivergenceError(sc.name, it);
      result.history.push_back({index, it, lg.eval.components, lg.eval.total});
      for (Block b : blocks) {
        if (b == Block::LogDepth) {
          ScalarField g(h, w);
          std::copy(lg[b].data(), lg[b].data() + lg[b].size(), g.data().begin());
          const Eigen::VectorXd pg = pyramid.pullback(g);
          if (config.shared_depth_moment) {
            for (int l = 0; l < pyramid.levels(); ++l) {
              const auto [b0, b1] = pyramid.level_range(l);
              adam[0].step_shared("log_depth_" + std::to_string(l), depth_params.segment(b0, b1 - b0),
                                  pg.segment(b0, b1 - b0));
            }
          } else {
            adam[0].step("log_depth", depth_params, pg);
          }
          if (!depth_params.allFinite()) throw DivergenceError(sc.name, it);
          const ScalarField composed = pyramid.compose(depth_params);
          s.log_depth = composed;
          project_log_depth(s);
          // Keep the parameters consistent with the projected field.
          for (std::size_t i = 0; i < composed.pixel_count(); ++i)
            depth_params[static_cast<Eigen::Index>(i)] += s.log_depth.data()[i] - composed.data()[i];
          continue;
        }
        Eigen::VectorXd x = get_block(s, b);
        adam[static_cast<int>(b)].step(to_string(b), x, lg[b]);
        if (!x.allFinite()) throw DivergenceError(sc.name, it);
        set_block(s, b, x);
      }
    }
    StageReport rep;
    rep.stage = index;
    rep.name = sc.name;
    rep.iterations = sc.iterations;
    rep.final_total = evaluate(s, input, obj).total;
    if (!std::isfinite(rep.final_total)) throw DivergenceError(sc.name, sc.iterations);
    rep.object_region_loss = region_photometric_loss(s, input, objects, alpha);
    for (const auto& [id, m] : s.rigids) rep.dynamic_ids.push_back(id);
    result.stages.push_back(rep);
  };

  ObjectiveConfig stage1;
  stage1.weights = config.weights;
  stage1.mask = false;
  run_stage(1, {Block::LogDepth, Block::Ego}, stage1);
  if (config.stage_count == 1) return result;

  for (const Instance& inst : input.instances_t)
    if (mask_count(inst.mask) > 0) s.rigids[inst.id] = EulerPose{};
  ObjectiveConfig motion_obj;
  motion_obj.weights = config.weights;
  motion_obj.smoothness = false;
  motion_obj.mask = false;
  motion_obj.lambda_def = config.lambda_def;
  if (!s.rigids.empty()) {
    motion_obj.region = boxes_region(input, s.rigids);
    FitState ego_only = s;
    ego_only.rigids.clear();
    const ColorImage i_ego = synthesize(ego_only, input);
    run_stage(2, {Block::Rigid}, motion_obj);
    const StaticFilterResult sf = static_filter(input.image_t, i_ego, synthesize(s, input), input.instances_t, alpha);
    for (int id : sf.static_ids) s.rigids.erase(id);
    for (int id : sf.skipped_ids) s.rigids.erase(id);
    result.stages.back().dynamic_ids = sf.dynamic_ids;
    result.stages.back().static_ids = sf.static_ids;
    result.stages.back().object_region_loss = region_photometric_loss(s, input, objects, alpha);
  } else {
    result.stages.push_back({2, config.schedule.stages[1].name, 0, std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::quiet_NaN(), {}, {}});
  }

  if (!s.rigids.empty()) {
    motion_obj.region = boxes_region(input, s.rigids);
    const ColorImage i_rig = synthesize(s, input);
    run_stage(3, {Block::Deformation}, motion_obj);
    InstanceSet dynamic;
    for (const Instance& inst : input.instances_t)
      if (s.rigids.count(inst.id)) dynamic.push_back(inst);
    const StaticFilterResult df = static_filter(input.image_t, i_rig, synthesize(s, input), dynamic, alpha);
    for (int id : df.static_ids) {
      for (const Instance& inst : dynamic)
        if (inst.id == id)
          for (int v = 0; v < h; ++v)
            for (int u = 0; u < w; ++u)
              if (inst.mask(v, u) > 0.5) s.deformation.pixel(v, u).setZero();
    }
    result.stages.back().dynamic_ids = df.dynamic_ids;
    result.stages.back().static_ids = df.static_ids;
    result.stages.back().object_region_loss = region_photometric_loss(s, input, objects, alpha);
  } else {
    result.stages.push_back({3, config.schedule.stages[2].name, 0, std::numeric_limits<double>::quiet_NaN(),
                             std::numeric_limits<double>::quiet_NaN(), {}, {}});
  }

  ObjectiveConfig full;
  full.weights = config.weights;
  full.lambda_def = config.lambda_def;
  run_stage(4, {Block::LogDepth, Block::Ego}, full);
  return result;
}

}  // namespace do3d
