#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "do3d/optim.hpp"
#include "do3d/warp.hpp"

namespace do3d {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

/// Runs one subcommand; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Writes log_depth.pfm, depth.pfm, deformation.pfm, poses.json and history.csv.
void save_fit(const FitResult& result, const std::filesystem::path& dir);
/// Reads the state written by save_fit.
FitState load_fit_state(const std::filesystem::path& dir);

/// Correspondence implied by a state through the pipeline warp (objects
/// without a rigid entry stay static).
CorrespondenceMap state_correspondence(const FitState& state, const Intrinsics& K, const InstanceSet& instances);

/// Scene used by gradcheck: a moving, deforming box over a tilted plane.
SceneSpec gradcheck_scene(std::uint64_t seed);

std::string history_csv(const std::vector<HistoryRow>& rows);

}  // namespace do3d
