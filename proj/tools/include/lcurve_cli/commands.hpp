// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcurve_cli/config.hpp"

namespace lcurve::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Output files of a command, relative names inside the output directory.
struct CommandResult {
  std::vector<std::filesystem::path> files;
  /// Sweep only: number of (seed, method) runs that failed.
  std::size_t failures = 0;
};

/// One checkpoint per seed in config.seeds plus manifest.json, all under
/// <out>/anchors.
CommandResult cmd_train_anchors(const ExperimentConfig& config);

/// curve_<method>.lcrv and curve_<method>_log.csv under <out>. Anchor-based
/// methods read the manifest named by config.anchors.
CommandResult cmd_train_curve(const ExperimentConfig& config);

/// metrics_<stem>.json with test-split metrics of the checkpoint.
CommandResult cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// profile_<stem>.csv, barrier_<stem>.json and evolution_<stem>.csv.
CommandResult cmd_profile(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// sweep_runs.csv (one row per seed and method) and sweep_summary.csv.
CommandResult cmd_sweep(const ExperimentConfig& config);

/// Parses argv, runs the subcommand and maps errors to exit codes:
/// 0 success, 1 experiment failure, 2 usage or config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env);

}  // namespace lcurve::cli
