// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcurve/bma.hpp"
#include "lcurve/trainer.hpp"
#include "lcurve_cli/config.hpp"

namespace lcurve::cli {

/// The dataset with its validation split carved out of train, seeded by the
/// dataset seed so anchors and curves see the same rows.
Dataset prepare_data(const DatasetConfig& config, double val_fraction);

LoraModel make_model(const NetworkConfig& network, const Dataset& data);

/// Grid options for a method: DE averages its anchors only, everything
/// else uses the configured grid size.
EvalOptions eval_options(const Method& method, const InferenceConfig& inference);

/// Builds the control-point set of `method`. MAP takes `anchors[0]` when
/// given and otherwise trains one adapter with `anchor_train` and `seed`.
/// DE and Lin assemble their anchors without training. ALC and FLC draw
/// fresh handles from `seed` and train with `curve_train` (its seed field
/// is replaced by `seed`).
ControlPointSet build_curve(const Method& method, const LoraModel& model, const Dataset& data,
                            const std::vector<Vector>& anchors, const TrainConfig& anchor_train,
                            const TrainConfig& curve_train, std::uint64_t seed, TrainReport* report = nullptr);

/// Seeds a sweep derives from one experiment seed s: data and base weights
/// use s, anchor i (1-based) uses 100*s + i, and curve training uses 1000 + s.
struct DerivedSeeds {
  std::uint64_t data = 0;
  std::uint64_t base = 0;
  std::uint64_t curve = 0;
  std::uint64_t anchor(int i) const noexcept { return 100 * data + static_cast<std::uint64_t>(i); }
  static DerivedSeeds from(std::int64_t seed);
};

struct MethodRun {
  Method method;
  bool ok = false;
  std::string error;
  ControlPointSet curve{CurveConfig(1, 0), {}, {}};
  TrainReport report;
  MetricsReport metrics;
};

/// Everything one sweep worker produces for a single experiment seed.
struct SeedRun {
  std::int64_t seed = 0;
  Dataset data;
  std::optional<LoraModel> model;
  std::vector<Vector> anchors;
  std::vector<MethodRun> methods;
};

/// Trains the anchors needed by the largest anchor-based method once, then
/// builds and evaluates every method on the test split. Per-method failures
/// are recorded in the result. Failures shared by all methods (negative seed,
/// anchor divergence) mark every method failed.
SeedRun run_seed(const ExperimentConfig& config, const std::vector<Method>& methods, std::int64_t seed);

/// Runs seeds on `workers` threads; results are in seed-list order.
std::vector<SeedRun> run_sweep(const ExperimentConfig& config, const std::vector<Method>& methods,
                               const std::vector<std::int64_t>& seeds, int workers);

struct SummaryRow {
  std::string method;
  std::size_t runs = 0;
  std::size_t failed = 0;
  /// Sample standard deviation (n - 1); NaN with fewer than two runs.
  double acc_mean = 0, acc_std = 0, ll_mean = 0, ll_std = 0, ece_mean = 0, ece_std = 0, mi_mean = 0, mi_std = 0;
};

std::vector<SummaryRow> summarize(const std::vector<Method>& methods, const std::vector<SeedRun>& runs);

}  // namespace lcurve::cli
