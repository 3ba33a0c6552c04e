// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "lcurve/curve.hpp"
#include "lcurve/data.hpp"
#include "lcurve/network.hpp"

namespace lcurve {

/// Loss landscape sampled along a curve.
///
/// Grid points are shared between adjacent segments at anchor joins. At a
/// join the curve may have a corner, so the speed is stored one-sided:
/// `speed_left` is the derivative of the segment ending at t, `speed_right`
/// of the segment starting there (equal in segment interiors).
struct LossProfile {
  std::vector<double> t;
  std::vector<double> loss;
  std::vector<double> accuracy;
  /// loss - loss at t = 0.
  std::vector<double> delta;
  /// Frobenius norm of d(mean CE)/dW over the adapted weight matrices.
  std::vector<double> grad_norm;
  std::vector<double> speed_left;
  std::vector<double> speed_right;
  /// Grid index of each anchor (t = 0, 1, ..., N-1).
  std::vector<std::size_t> anchor_index;

  std::size_t size() const noexcept { return t.size(); }
  /// One value per grid point for CSV export: right-sided except at the end.
  std::vector<double> speed() const;
};

struct SegmentBarrier {
  int segment = 0;
  double max_loss = 0.0;
  double t_at_max = 0.0;
  double endpoint_max = 0.0;
  double barrier = 0.0;
};

struct BarrierReport {
  double path_max = 0.0;
  double anchor_max = 0.0;
  double barrier = 0.0;
  double t_at_max = 0.0;
  std::vector<SegmentBarrier> segments;
};

struct LipschitzReport {
  std::size_t pairs_checked = 0;
  std::size_t violations = 0;
  /// min over pairs of (bound + allowance - |delta loss|); >= 0 means no violation.
  double worst_slack = 0.0;
  double worst_s = 0.0;
  double worst_t = 0.0;
};

struct ContinuityRow {
  double eps = 0.0;
  /// Total variation between p(.|x, W(t)) and p(.|x, W(t + eps)); NaN if t+eps leaves the domain.
  double tv_plus = 0.0;
  double tv_minus = 0.0;
};

/// Evaluates the curve at points_per_segment points per segment (joins
/// shared) on `data`.
LossProfile profile(const LoraModel& model, const ControlPointSet& curve, const Split& data,
                    int points_per_segment = 101);

/// Barrier of a profile relative to the loss at the anchor grid values.
BarrierReport barrier(const LossProfile& profile, std::span<const double> anchor_ts);

/// |l(t) - l(s)| <= int_s^t ||grad_W L|| ||dW/du|| du, trapezoid rule, for
/// every grid pair inside one segment. The allowance on a pair is
/// `allowance_factor * (t - s) * max|second difference of the integrand| / 12`
/// over the segment, the trapezoid-rule error estimate.
LipschitzReport lipschitz_check(const LossProfile& profile, double allowance_factor = 1.0);

/// Trapezoid integral of grad_norm * speed over grid indices [i, j] within
/// one segment.
double path_integral(const LossProfile& profile, std::size_t i, std::size_t j);

double total_variation(std::span<const double> p, std::span<const double> q);

std::vector<ContinuityRow> continuity_probe(const LoraModel& model, const ControlPointSet& curve,
                                            const Matrix& input, double t, std::span<const double> eps_list);

/// probs[e][j] is the class distribution of example e at grid[j].
struct ProbabilityEvolution {
  std::vector<double> grid;
  std::vector<std::vector<std::vector<double>>> probs;
};

ProbabilityEvolution probability_evolution(const LoraModel& model, const ControlPointSet& curve,
                                           const Matrix& examples, std::span<const double> grid);

}  // namespace lcurve
