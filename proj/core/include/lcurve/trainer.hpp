// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lcurve/curve.hpp"
#include "lcurve/data.hpp"
#include "lcurve/network.hpp"
#include "lcurve/optim.hpp"
#include "lcurve/rng.hpp"

namespace lcurve {

enum class CurveMode { Free, Anchored };

/// How the JSD term enters the loss. Hinge: max(tau - D, 0). Cap: -min(D, tau).
enum class JsdPenalty { Hinge, Cap };

struct TrainConfig {
  std::int64_t total_steps = 1000;
  int batch_size = 16;

  double peak_lr = 1e-2;
  double pct_start = 0.12;
  double div_factor = 300.0;
  double final_div_factor = 1e4;
  double weight_decay = 0.001;

  double jsd_lambda = 0.2;
  double jsd_tau = 0.05;
  JsdPenalty jsd_penalty = JsdPenalty::Hinge;

  double rho = 0.25;
  int resample_every = 50;
  bool rho_warmup = false;

  double repulsive_lambda = 0.0;

  double val_fraction = 0.10;
  int eval_every = 25;
  /// Evaluations without improvement before stopping; 0 disables.
  int patience = 20;
  /// Grid size for validation BMA; default 2*N_cp - 1.
  std::optional<int> val_grid_points;

  std::uint64_t seed = 0;

  void validate() const;
  OneCycleSchedule schedule() const;

  /// Desk-scale defaults: 500 anchor steps, 1000 curve steps.
  static TrainConfig desk_anchor();
  static TrainConfig desk_curve();
  /// Step counts, batch size and peak learning rate of the full-size setup.
  static TrainConfig paper_anchor();
  static TrainConfig paper_curve();

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  /// Batch-mean JSD between the two curve points; NaN when not computed.
  double jsd = 0.0;
  /// Validation mean log-likelihood; NaN when not evaluated at this step.
  double val_ll = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::int64_t best_step = 0;
  double best_val_ll = 0.0;
  bool early_stopped = false;
  double wall_seconds = 0.0;
  ControlPointSet final_points{CurveConfig(1, 0), {}, {}};
};

/// Loss and per-control-point gradients for one curve evaluation.
struct CurveStepResult {
  double loss = 0.0;
  double ce_first = 0.0;
  double ce_second = 0.0;
  double jsd = 0.0;
  double penalty = 0.0;
  std::vector<Vector> grads;
};

/// A fresh adapter: A ~ N(0, 1/d_in) entrywise, B = 0.
Vector init_adapter(const LoraModel& model, Rng& rng);

/// Free: every point gets a fresh adapter. Anchored: anchor slots copy
/// `anchors` and are frozen; handles get fresh adapters.
ControlPointSet init_curve(const CurveConfig& config, CurveMode mode, const std::vector<Vector>& anchors,
                           const LoraModel& model, Rng& rng);

/// Mean cross-entropy at curve position t, gradients routed to control
/// points by their Bernstein weights. `noise` (standard-normal draws per
/// site) is scaled by rho and the row norms of W(t).
CurveStepResult curve_step(const ControlPointSet& points, const LoraModel& model, const Matrix& x,
                           std::span<const int> y, double t, double rho = 0.0,
                           const SiteMatrices* noise = nullptr);

/// Symmetric two-point loss 0.5*(CE(t1) + CE(t2)) + lambda * L_JSD with
/// t2 = (t1 + N_seg/2) mod N_seg.
CurveStepResult jsd_step(const ControlPointSet& points, const LoraModel& model, const Matrix& x,
                         std::span<const int> y, double t1, const TrainConfig& config, double rho = 0.0,
                         const SiteMatrices* noise = nullptr);

double jsd_partner(double t1, double t_max);

/// Batch-mean Jensen-Shannon divergence between row-wise distributions.
double mean_jsd(const Matrix& p, const Matrix& q);

/// Sum over pairs of squared cosine similarity between control points.
double repulsive_penalty(const std::vector<Vector>& points);
std::vector<Vector> repulsive_gradient(const std::vector<Vector>& points);

/// Trains the unfrozen control points. Throws std::invalid_argument if every
/// point is frozen and DivergenceError on a non-finite loss.
TrainReport train_curve(const ControlPointSet& points, const LoraModel& model, const Dataset& data,
                        const TrainConfig& config);

/// The initialization stream used by pretrain_anchor and the CLI for a seed.
Rng init_rng(std::uint64_t seed);

/// A single adapter trained as the one-point curve FLC(1,0).
Vector pretrain_anchor(const LoraModel& model, const Dataset& data, const TrainConfig& config, std::uint64_t seed,
                       TrainReport* report = nullptr);

}  // namespace lcurve
