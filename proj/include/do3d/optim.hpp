#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "do3d/camera.hpp"
#include "do3d/grid.hpp"
#include "do3d/loss.hpp"
#include "do3d/motion.hpp"
#include "do3d/scene.hpp"

namespace do3d {

/// Log-depth projection box, meters.
inline constexpr double kMinFitDepth = 0.1;
inline constexpr double kMaxFitDepth = 100.0;

enum class Block { LogDepth = 0, Ego = 1, Rigid = 2, Deformation = 3 };
inline constexpr std::array<Block, 4> kAllBlocks{Block::LogDepth, Block::Ego, Block::Rigid, Block::Deformation};
std::string to_string(Block b);
/// Accepts "log_depth" (or "depth"), "ego", "rigid", "deformation".
Block block_from_string(const std::string& name);

/// What the fit may see: images and instance masks, no geometry.
struct FitInput {
  Intrinsics K;
  ColorImage image_t;
  ColorImage image_s;
  InstanceSet instances_t;
  InstanceSet instances_s;

  int height() const { return image_t.height(); }
  int width() const { return image_t.width(); }
};
FitInput fit_input(const RenderedPair& pair);

struct FitState {
  ScalarField log_depth;
  EulerPose ego;
  /// Motion of each object currently treated as dynamic; objects without an
  /// entry do not move.
  std::map<int, EulerPose> rigids;
  VectorField3 deformation;
  std::array<bool, 4> frozen{};

  bool is_frozen(Block b) const { return frozen[static_cast<int>(b)]; }
  void set_frozen(Block b, bool f) { frozen[static_cast<int>(b)] = f; }
  ScalarField depth() const;
};

/// Constant-depth, identity-pose, motionless state.
FitState initial_state(int height, int width, double depth);

/// The ground-truth geometry of a rendered pair as a state.
FitState ground_truth_state(const RenderedPair& pair);

/// Flattened view of one block: log_depth row-major; ego as
/// (pitch, roll, yaw, tx, ty, tz); rigids concatenated in id order;
/// deformation row-major xyz.
Eigen::VectorXd get_block(const FitState& s, Block b);
void set_block(FitState& s, Block b, const Eigen::VectorXd& values);

struct ObjectiveConfig {
  LossWeights weights;
  bool photometric = true;
  bool smoothness = true;
  bool mask = true;
  /// Optional restriction of the photometric and mask terms.
  std::optional<BinaryMask> region;
  /// Weight of mean |M_def|^2 over dynamic-object pixels.
  double lambda_def = 0.0;
};

/// Forward pass of the objective.
struct Evaluation {
  LossComponents components;
  double deformation_penalty = 0.0;
  double total = 0.0;
  std::size_t valid_count = 0;
  ColorImage synthesized;  // inverse-warped I_s
  BinaryMask valid;        // in-bounds correspondences (before region)
  ScalarField u_s;
  ScalarField v_s;
};
Evaluation evaluate(const FitState& state, const FitInput& input, const ObjectiveConfig& config);

/// Per-block gradients; blocks that are inactive or frozen have size 0.
struct LossGradients {
  Evaluation eval;
  std::array<Eigen::VectorXd, 4> grad;
  const Eigen::VectorXd& operator[](Block b) const { return grad[static_cast<int>(b)]; }
};
/// Throws DegenerateInputError when no pixel is valid.
LossGradients loss_and_gradients(const FitState& state, const FitInput& input, const ObjectiveConfig& config,
                                 const std::set<Block>& active);

/// Adam on flattened blocks.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// One update of `x` given gradient `g` for the named slot.
  void step(const std::string& slot, Eigen::VectorXd& x, const Eigen::VectorXd& g);
  /// Same update with one second-moment estimate (mean of g^2) shared by
  /// every coordinate of the slot.
  void step_shared(const std::string& slot, Eigen::Ref<Eigen::VectorXd> x, const Eigen::Ref<const Eigen::VectorXd>& g);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::map<std::string, std::pair<Eigen::VectorXd, Eigen::VectorXd>> moments_;
  std::map<std::string, int> steps_;
};

/// Multi-resolution parameterization of a field: value = sum over levels of
/// the bilinear upsampling of level l (level 0 is full resolution, each
/// further level halves both sides, rounding up).
class PyramidField {
 public:
  PyramidField(int height, int width, int levels);
  Eigen::Index size() const { return offsets_.back(); }
  /// Composed full-resolution field.
  ScalarField compose(const Eigen::VectorXd& params) const;
  /// Adjoint of compose: pulls a full-resolution gradient back to the levels.
  Eigen::VectorXd pullback(const ScalarField& grad) const;
  /// Parameters with the given field in level 0 and zero elsewhere.
  Eigen::VectorXd from_field(const ScalarField& field) const;
  int levels() const { return static_cast<int>(offsets_.size()) - 1; }
  /// [begin, end) of level l inside the parameter vector.
  std::pair<Eigen::Index, Eigen::Index> level_range(int l) const { return {offsets_[l], offsets_[l + 1]}; }

 private:
  struct Tap {
    Eigen::Index index;
    double weight;
  };
  int height_, width_;
  std::vector<Eigen::Index> offsets_;
  // Per pixel, per level (>= 1), the four bilinear taps.
  std::vector<std::vector<std::array<Tap, 4>>> taps_;
};

/// Clamps log-depth into [ln kMinFitDepth, ln kMaxFitDepth].
void project_log_depth(FitState& s);

struct GradCheckOptions {
  /// Step for per-pixel blocks (log-depth, deformation).
  double epsilon_local = 1e-4;
  /// Step for global blocks (ego, rigid); halved on kinks.
  double epsilon_global = 1e-6;
  int samples = 8;
  std::uint64_t seed = 0;
  /// Test hook: perturbs the analytic gradient of this block.
  std::optional<Block> corrupt;
};

struct GradCheckResult {
  Block block = Block::Ego;
  double max_rel_error = 0.0;
  int samples = 0;
};

/// Central differences on randomly sampled coordinates of `block`. The step
/// is halved while the two evaluations disagree on the valid set, on the
/// bilinear cell of any correspondence or on the sign of any residual. Relative error uses
/// |ga - gfd| / (max(|ga|, |gfd|) + 1e-8).
GradCheckResult gradient_check(const FitState& state, const FitInput& input, const ObjectiveConfig& config,
                               Block block, const GradCheckOptions& options);

/// A random non-degenerate state near the truth of `pair`, for gradient checks.
FitState perturbed_state(const RenderedPair& pair, std::uint64_t seed);

struct StageConfig {
  std::string name;
  int iterations = 0;
  double learning_rate = 0.0;
};

struct StageSchedule {
  std::array<StageConfig, 4> stages;
};
StageSchedule default_schedule();

struct FitConfig {
  StageSchedule schedule = default_schedule();
  LossWeights weights;
  double initial_depth = 10.0;
  double lambda_def = 0.0;
  /// Number of stages to run: 1 (baseline) or 4 (full).
  int stage_count = 4;
  /// Log-depth is optimized as a sum of this many bilinearly upsampled
  /// levels (1 = plain per-pixel parameters).
  int depth_levels = 5;
  /// Per-block multiplier on the stage learning rate, indexed by Block.
  std::array<double, 4> block_lr_scale{1.0, 1.0, 1.0, 1.0};
  /// Log-depth levels use one Adam second moment per level instead of one
  /// per coordinate.
  bool shared_depth_moment = true;
};

struct HistoryRow {
  int stage = 0;
  int iteration = 0;
  LossComponents components;
  double total = 0.0;
};

struct StageReport {
  int stage = 0;
  std::string name;
  int iterations = 0;
  double final_total = 0.0;
  /// Photometric loss over the union of instance masks at the end of the stage
  /// (NaN when no object pixel is valid).
  double object_region_loss = 0.0;
  std::vector<int> dynamic_ids;
  std::vector<int> static_ids;
};

struct FitResult {
  FitState state;
  std::vector<HistoryRow> history;
  std::vector<StageReport> stages;
};

/// Piece-wise fitting: (1) depth + ego, (2) rigid motions in enlarged boxes
/// followed by the static filter, (3) deformation followed by its filter,
/// (4) depth + ego under the full objective. Throws DivergenceError.
FitResult fit_staged(const FitInput& input, const FitConfig& config);

/// Mean photometric loss over `region` of the reconstruction given by `state`.
double region_photometric_loss(const FitState& state, const FitInput& input, const BinaryMask& region, double alpha);

}  // namespace do3d
