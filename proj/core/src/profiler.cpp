// SPDX-License-Identifier: Apache-2.0
#include "lcurve/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lcurve/bma.hpp"

namespace lcurve {

namespace {

// Grid index ranges [first, last] of each segment.
std::vector<std::pair<std::size_t, std::size_t>> segment_ranges(const LossProfile& p) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a + 1 < p.anchor_index.size(); ++a) out.emplace_back(p.anchor_index[a], p.anchor_index[a + 1]);
  return out;
}

double integrand(const LossProfile& p, std::size_t i, std::size_t first, std::size_t last) {
  double speed = p.speed_right[i];
  if (i == last && i != first) speed = p.speed_left[i];
  return p.grad_norm[i] * speed;
}

}  // namespace

std::vector<double> LossProfile::speed() const {
  std::vector<double> out = speed_right;
  if (!out.empty()) out.back() = speed_left.back();
  return out;
}

LossProfile profile(const LoraModel& model, const ControlPointSet& curve, const Split& data,
                    int points_per_segment) {
  if (points_per_segment < 2) throw std::domain_error("profile needs at least two points per segment");
  if (data.size() == 0) throw std::domain_error("profile of an empty split");
  const CurveConfig& config = curve.config;

  LossProfile p;
  if (config.num_segments() == 0) {
    p.t.push_back(0.0);
  } else {
    for (int k = 0; k < config.num_segments(); ++k) {
      const int start = k == 0 ? 0 : 1;
      for (int i = start; i < points_per_segment; ++i) {
        p.t.push_back(static_cast<double>(k) + static_cast<double>(i) / static_cast<double>(points_per_segment - 1));
      }
    }
  }
  for (int a = 0; a < config.num_anchors(); ++a) {
    p.anchor_index.push_back(static_cast<std::size_t>(a) * static_cast<std::size_t>(points_per_segment - 1));
  }

  for (double t : p.t) {
    const Vector theta = eval_curve(curve, t);
    const SiteMatrices w = model.materialize_weights(theta);
    const ForwardTape tape = model.forward_tape(w, data.x);
    p.loss.push_back(mean_cross_entropy(tape.prediction.log_probs, data.y));
    p.accuracy.push_back(accuracy(tape.prediction.probs, data.y));
    const SiteMatrices gw = model.backward_weights(w, tape, cross_entropy_logit_grad(tape.prediction.probs, data.y));
    p.grad_norm.push_back(site_norm(gw));
    p.speed_left.push_back(site_norm(model.weight_velocity(theta, eval_curve_derivative(curve, t, Side::Left))));
    p.speed_right.push_back(site_norm(model.weight_velocity(theta, eval_curve_derivative(curve, t, Side::Right))));
  }
  for (double l : p.loss) p.delta.push_back(l - p.loss.front());
  return p;
}

BarrierReport barrier(const LossProfile& profile, std::span<const double> anchor_ts) {
  if (profile.size() == 0) throw std::domain_error("barrier of an empty profile");
  if (anchor_ts.empty()) throw std::domain_error("barrier needs at least one anchor");
  std::vector<std::size_t> idx;
  for (double a : anchor_ts) {
    const auto it = std::find_if(profile.t.begin(), profile.t.end(), [&](double t) { return std::abs(t - a) <= 1e-12; });
    if (it == profile.t.end()) throw std::domain_error("anchor t=" + std::to_string(a) + " is not on the profile grid");
    idx.push_back(static_cast<std::size_t>(it - profile.t.begin()));
  }
  BarrierReport r;
  const auto max_it = std::max_element(profile.loss.begin(), profile.loss.end());
  r.path_max = *max_it;
  r.t_at_max = profile.t[static_cast<std::size_t>(max_it - profile.loss.begin())];
  r.anchor_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i : idx) r.anchor_max = std::max(r.anchor_max, profile.loss[i]);
  r.barrier = std::max(0.0, r.path_max - r.anchor_max);
  for (std::size_t a = 0; a + 1 < idx.size(); ++a) {
    const std::size_t lo = std::min(idx[a], idx[a + 1]);
    const std::size_t hi = std::max(idx[a], idx[a + 1]);
    SegmentBarrier s;
    s.segment = static_cast<int>(a);
    const auto seg_max = std::max_element(profile.loss.begin() + static_cast<std::ptrdiff_t>(lo),
                                          profile.loss.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    s.max_loss = *seg_max;
    s.t_at_max = profile.t[static_cast<std::size_t>(seg_max - profile.loss.begin())];
    s.endpoint_max = std::max(profile.loss[lo], profile.loss[hi]);
    s.barrier = std::max(0.0, s.max_loss - s.endpoint_max);
    r.segments.push_back(s);
  }
  return r;
}

double path_integral(const LossProfile& profile, std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  for (const auto& [first, last] : segment_ranges(profile)) {
    if (i < first || j > last) continue;
    double total = 0.0;
    for (std::size_t k = i; k < j; ++k) {
      const double h = profile.t[k + 1] - profile.t[k];
      total += 0.5 * h * (integrand(profile, k, first, last) + integrand(profile, k + 1, first, last));
    }
    return total;
  }
  throw std::domain_error("grid indices do not lie in one segment");
}

LipschitzReport lipschitz_check(const LossProfile& profile, double allowance_factor) {
  LipschitzReport report;
  report.worst_slack = std::numeric_limits<double>::infinity();
  for (const auto& [first, last] : segment_ranges(profile)) {
    const std::size_t len = last - first + 1;
    std::vector<double> f(len);
    for (std::size_t k = 0; k < len; ++k) f[k] = integrand(profile, first + k, first, last);
    std::vector<double> prefix(len, 0.0);
    for (std::size_t k = 1; k < len; ++k) {
      const double h = profile.t[first + k] - profile.t[first + k - 1];
      prefix[k] = prefix[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
    }
    double max_second = 0.0;
    for (std::size_t k = 1; k + 1 < len; ++k) {
      max_second = std::max(max_second, std::abs(f[k - 1] - 2.0 * f[k] + f[k + 1]));
    }
    for (std::size_t a = 0; a < len; ++a) {
      for (std::size_t b = a + 1; b < len; ++b) {
        const double span = profile.t[first + b] - profile.t[first + a];
        const double bound = prefix[b] - prefix[a];
        const double allowance = allowance_factor * span * max_second / 12.0 + 1e-12;
        const double change = std::abs(profile.loss[first + b] - profile.loss[first + a]);
        const double slack = bound + allowance - change;
        ++report.pairs_checked;
        if (slack < 0.0) ++report.violations;
        if (slack < report.worst_slack) {
          report.worst_slack = slack;
          report.worst_s = profile.t[first + a];
          report.worst_t = profile.t[first + b];
        }
      }
    }
  }
  if (report.pairs_checked == 0) report.worst_slack = 0.0;
  return report;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("distribution size mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

std::vector<ContinuityRow> continuity_probe(const LoraModel& model, const ControlPointSet& curve,
                                            const Matrix& input, double t, std::span<const double> eps_list) {
  const double t_max = curve.config.t_max();
  const Matrix base = model.forward(eval_curve(curve, t), input).probs;
  auto tv_at = [&](double s) {
    if (s < 0.0 || s > t_max) return std::numeric_limits<double>::quiet_NaN();
    const Matrix other = model.forward(eval_curve(curve, s), input).probs;
    double worst = 0.0;
    for (Eigen::Index r = 0; r < base.rows(); ++r) {
      worst = std::max(worst, 0.5 * (base.row(r) - other.row(r)).cwiseAbs().sum());
    }
    return worst;
  };
  std::vector<ContinuityRow> rows;
  for (double eps : eps_list) rows.push_back({eps, tv_at(t + eps), tv_at(t - eps)});
  return rows;
}

ProbabilityEvolution probability_evolution(const LoraModel& model, const ControlPointSet& curve,
                                           const Matrix& examples, std::span<const double> grid) {
  ProbabilityEvolution out;
  out.grid.assign(grid.begin(), grid.end());
  out.probs.assign(static_cast<std::size_t>(examples.rows()), {});
  for (double t : grid) {
    const Matrix p = model.forward(eval_curve(curve, t), examples).probs;
    for (Eigen::Index e = 0; e < p.rows(); ++e) {
      out.probs[static_cast<std::size_t>(e)].emplace_back(p.row(e).data(), p.row(e).data() + p.cols());
    }
  }
  return out;
}

}  // namespace lcurve
