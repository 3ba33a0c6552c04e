// SPDX-License-Identifier: Apache-2.0
#include "lcurve/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lcurve/bma.hpp"
#include "lcurve/errors.hpp"

namespace lcurve {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kTStream = 3;
constexpr std::uint64_t kNoiseStream = 4;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct PointEval {
  Vector theta;
  SiteMatrices weights;
  ForwardTape tape;
};

PointEval evaluate_point(const ControlPointSet& points, const LoraModel& model, const Matrix& x, double t,
                         double rho, const SiteMatrices* noise) {
  PointEval e;
  e.theta = eval_curve(points, t);
  e.weights = model.materialize_weights(e.theta);
  if (noise != nullptr && rho > 0.0) {
    const SiteMatrices eps = model.scale_flat_noise(e.weights, rho, *noise);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      if (eps[i].size() > 0) e.weights[i] += eps[i];
    }
  }
  e.tape = model.forward_tape(e.weights, x);
  return e;
}

void route_gradient(const PointEval& e, const LoraModel& model, const Matrix& logit_grad, double t,
                    const CurveConfig& config, std::vector<Vector>& grads) {
  const SiteMatrices gw = model.backward_weights(e.weights, e.tape, logit_grad);
  const Vector g = model.adapter_gradient(model.unflatten(e.theta), gw);
  for (const auto& [index, weight] : control_point_weights(t, config)) {
    grads[static_cast<std::size_t>(index)].noalias() += weight * g;
  }
}

std::vector<Vector> zero_grads(const ControlPointSet& points) {
  return std::vector<Vector>(points.points.size(), Vector::Zero(points.dimension()));
}

// d(mean JSD)/d(logits of p), batch size folded in.
Matrix jsd_logit_grad(const Matrix& p, const Matrix& q) {
  const auto n = static_cast<double>(p.rows());
  Matrix g(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double inner = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double pc = p(r, c);
      const double lg = pc > 0.0 ? 0.5 * std::log(pc / (0.5 * (pc + q(r, c)))) : 0.0;
      g(r, c) = lg;
      inner += pc * lg;
    }
    for (Eigen::Index c = 0; c < p.cols(); ++c) g(r, c) = p(r, c) * (g(r, c) - inner) / n;
  }
  return g;
}

class BatchSampler {
 public:
  BatchSampler(Eigen::Index n, int batch_size, Rng rng)
      : order_(static_cast<std::size_t>(n)), batch_(std::min<Eigen::Index>(batch_size, n)), rng_(rng) {
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    shuffle();
  }

  std::vector<Eigen::Index> next() {
    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(batch_));
    while (static_cast<Eigen::Index>(rows.size()) < batch_) {
      if (cursor_ == order_.size()) shuffle();
      rows.push_back(order_[cursor_++]);
    }
    return rows;
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng_.below(i))]);
    }
    cursor_ = 0;
  }

  std::vector<Eigen::Index> order_;
  Eigen::Index batch_;
  Rng rng_;
  std::size_t cursor_ = 0;
};

double validation_ll(const LoraModel& model, const ControlPointSet& points, const Split& val,
                     const std::optional<int>& grid_points) {
  const std::vector<double> grid = make_eval_grid(points.config, grid_points);
  const GridPredictions gp = predict_grid(model, points, val.x, grid);
  return mean_log_likelihood(bma_mixture(gp), val.y);
}

}  // namespace

void TrainConfig::validate() const {
  if (total_steps < 0) throw std::invalid_argument("total_steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(peak_lr > 0.0)) throw std::invalid_argument("peak_lr must be positive");
  if (!(pct_start >= 0.0 && pct_start <= 1.0)) throw std::invalid_argument("pct_start must be in [0, 1]");
  if (!(div_factor > 0.0) || !(final_div_factor > 0.0)) throw std::invalid_argument("div factors must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(jsd_lambda >= 0.0)) throw std::invalid_argument("jsd_lambda must be >= 0");
  if (!(jsd_tau >= 0.0)) throw std::invalid_argument("jsd_tau must be >= 0");
  if (!(rho >= 0.0)) throw std::invalid_argument("rho must be >= 0");
  if (resample_every < 1) throw std::invalid_argument("resample_every must be >= 1");
  if (!(repulsive_lambda >= 0.0)) throw std::invalid_argument("repulsive_lambda must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val_fraction must be in [0, 1)");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (patience < 0) throw std::invalid_argument("patience must be >= 0");
  if (val_grid_points && *val_grid_points < 1) throw std::invalid_argument("val_grid_points must be >= 1");
}

OneCycleSchedule TrainConfig::schedule() const {
  return {total_steps, peak_lr, pct_start, div_factor, final_div_factor};
}

TrainConfig TrainConfig::desk_anchor() {
  TrainConfig c;
  c.total_steps = 500;
  return c;
}

TrainConfig TrainConfig::desk_curve() {
  TrainConfig c;
  c.total_steps = 1000;
  return c;
}

TrainConfig TrainConfig::paper_anchor() {
  TrainConfig c;
  c.total_steps = 5000;
  c.batch_size = 4;
  c.peak_lr = 1e-4;
  return c;
}

TrainConfig TrainConfig::paper_curve() {
  TrainConfig c = paper_anchor();
  c.total_steps = 10000;
  return c;
}

Vector init_adapter(const LoraModel& model, Rng& rng) {
  Vector theta = Vector::Zero(model.adapter_dim());
  for (const auto& s : model.sites()) {
    if (!s.adapted) continue;
    const double stddev = 1.0 / std::sqrt(static_cast<double>(s.in_dim));
    for (Eigen::Index i = 0; i < s.a_size(); ++i) theta[s.offset + i] = rng.normal(0.0, stddev);
  }
  return theta;
}

ControlPointSet init_curve(const CurveConfig& config, CurveMode mode, const std::vector<Vector>& anchors,
                           const LoraModel& model, Rng& rng) {
  const auto n_cp = static_cast<std::size_t>(config.num_control_points());
  std::vector<Vector> points(n_cp);
  if (mode == CurveMode::Free) {
    for (auto& p : points) p = init_adapter(model, rng);
    return ControlPointSet::make_free(config, std::move(points));
  }
  if (anchors.size() != static_cast<std::size_t>(config.num_anchors())) {
    throw std::invalid_argument("anchored curve needs " + std::to_string(config.num_anchors()) + " anchors, got " +
                                std::to_string(anchors.size()));
  }
  for (std::size_t i = 0; i < n_cp; ++i) {
    const int idx = static_cast<int>(i);
    if (config.is_anchor_index(idx)) {
      const Vector& a = anchors[static_cast<std::size_t>(idx / config.segment_degree())];
      if (a.size() != model.adapter_dim()) throw std::invalid_argument("anchor dimension mismatch");
      points[i] = a;
    } else {
      points[i] = init_adapter(model, rng);
    }
  }
  return ControlPointSet::make_anchored(config, std::move(points));
}

CurveStepResult curve_step(const ControlPointSet& points, const LoraModel& model, const Matrix& x,
                           std::span<const int> y, double t, double rho, const SiteMatrices* noise) {
  const PointEval e = evaluate_point(points, model, x, t, rho, noise);
  CurveStepResult out;
  out.loss = mean_cross_entropy(e.tape.prediction.log_probs, y);
  out.ce_first = out.loss;
  out.ce_second = kNaN;
  out.jsd = kNaN;
  out.grads = zero_grads(points);
  route_gradient(e, model, cross_entropy_logit_grad(e.tape.prediction.probs, y), t, points.config, out.grads);
  return out;
}

double jsd_partner(double t1, double t_max) {
  if (!(t_max > 0.0)) throw std::domain_error("JSD partner needs at least one segment");
  return std::fmod(t1 + 0.5 * t_max, t_max);
}

double mean_jsd(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw std::invalid_argument("JSD shape mismatch");
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double d = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double m = 0.5 * (p(r, c) + q(r, c));
      if (p(r, c) > 0.0) d += p(r, c) * std::log(p(r, c) / m);
      if (q(r, c) > 0.0) d += q(r, c) * std::log(q(r, c) / m);
    }
    total += 0.5 * d;
  }
  return total / static_cast<double>(p.rows());
}

CurveStepResult jsd_step(const ControlPointSet& points, const LoraModel& model, const Matrix& x,
                         std::span<const int> y, double t1, const TrainConfig& config, double rho,
                         const SiteMatrices* noise) {
  const double t2 = jsd_partner(t1, points.config.t_max());
  const PointEval e1 = evaluate_point(points, model, x, t1, rho, noise);
  const PointEval e2 = evaluate_point(points, model, x, t2, rho, noise);
  const Matrix& p1 = e1.tape.prediction.probs;
  const Matrix& p2 = e2.tape.prediction.probs;

  CurveStepResult out;
  out.ce_first = mean_cross_entropy(e1.tape.prediction.log_probs, y);
  out.ce_second = mean_cross_entropy(e2.tape.prediction.log_probs, y);
  out.jsd = mean_jsd(p1, p2);

  // d(penalty)/d(JSD): -1 while the margin is not met, 0 beyond it.
  double slope = 0.0;
  if (config.jsd_penalty == JsdPenalty::Hinge) {
    out.penalty = std::max(config.jsd_tau - out.jsd, 0.0);
    slope = config.jsd_tau - out.jsd > 0.0 ? -1.0 : 0.0;
  } else {
    out.penalty = -std::min(out.jsd, config.jsd_tau);
    slope = out.jsd < config.jsd_tau ? -1.0 : 0.0;
  }
  out.loss = 0.5 * (out.ce_first + out.ce_second) + config.jsd_lambda * out.penalty;

  Matrix g1 = 0.5 * cross_entropy_logit_grad(p1, y);
  Matrix g2 = 0.5 * cross_entropy_logit_grad(p2, y);
  const double coef = config.jsd_lambda * slope;
  if (coef != 0.0) {
    g1 += coef * jsd_logit_grad(p1, p2);
    g2 += coef * jsd_logit_grad(p2, p1);
  }
  out.grads = zero_grads(points);
  route_gradient(e1, model, g1, t1, points.config, out.grads);
  route_gradient(e2, model, g2, t2, points.config, out.grads);
  return out;
}

double repulsive_penalty(const std::vector<Vector>& points) {
  if (points.size() < 2) throw std::domain_error("repulsive penalty needs at least two points");
  std::vector<double> norms;
  for (const auto& p : points) {
    const double n = p.norm();
    if (n == 0.0) throw std::domain_error("repulsive penalty of a zero vector");
    norms.push_back(n);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double c = points[i].dot(points[j]) / (norms[i] * norms[j]);
      total += c * c;
    }
  }
  return total;
}

std::vector<Vector> repulsive_gradient(const std::vector<Vector>& points) {
  if (points.size() < 2) throw std::domain_error("repulsive penalty needs at least two points");
  std::vector<Vector> grads(points.size(), Vector::Zero(points.front().size()));
  std::vector<double> norms;
  for (const auto& p : points) {
    const double n = p.norm();
    if (n == 0.0) throw std::domain_error("repulsive penalty of a zero vector");
    norms.push_back(n);
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double nn = norms[i] * norms[j];
      const double c = points[i].dot(points[j]) / nn;
      // d cos / d p_i = p_j / (|p_i||p_j|) - cos * p_i / |p_i|^2
      grads[i].noalias() += 2.0 * c * (points[j] / nn - c * points[i] / (norms[i] * norms[i]));
      grads[j].noalias() += 2.0 * c * (points[i] / nn - c * points[j] / (norms[j] * norms[j]));
    }
  }
  return grads;
}

TrainReport train_curve(const ControlPointSet& points, const LoraModel& model, const Dataset& data,
                        const TrainConfig& config) {
  config.validate();
  points.validate();
  if (points.num_trainable() == 0) throw std::invalid_argument("every control point is frozen; nothing to train");
  if (points.dimension() != model.adapter_dim()) throw std::invalid_argument("control point dimension mismatch");
  if (data.train.size() == 0) throw std::invalid_argument("empty training split");

  const auto start = std::chrono::steady_clock::now();
  const Rng root(config.seed);
  BatchSampler sampler(data.train.size(), config.batch_size, root.split(kBatchStream));
  Rng t_rng = root.split(kTStream);
  Rng noise_rng = root.split(kNoiseStream);
  const OneCycleSchedule schedule = config.schedule();
  const double t_max = points.config.t_max();
  const bool use_jsd = config.jsd_lambda > 0.0 && points.config.num_segments() > 0;
  const bool use_noise = config.rho > 0.0;
  const bool has_val = data.val.size() > 0;

  ControlPointSet current = points;
  AdamW optimizer({0.9, 0.999, 1e-8, config.weight_decay}, current.frozen, current.dimension());

  TrainReport report;
  report.final_points = current;
  report.best_val_ll = -std::numeric_limits<double>::infinity();
  int evals_without_improvement = 0;
  SiteMatrices standard_noise;

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const double lr = schedule(step);
    const Split batch = data.train.subset(sampler.next());
    const double t = t_rng.uniform(0.0, t_max);

    double rho = 0.0;
    if (use_noise) {
      if (step % config.resample_every == 0) standard_noise = model.draw_standard_noise(noise_rng);
      rho = config.rho;
      if (config.rho_warmup) {
        const double ramp = config.pct_start * static_cast<double>(config.total_steps);
        if (ramp > 0.0) rho *= std::min(1.0, static_cast<double>(step) / ramp);
      }
    }
    const SiteMatrices* noise = use_noise ? &standard_noise : nullptr;

    CurveStepResult result;
    try {
      result = use_jsd ? jsd_step(current, model, batch.x, batch.y, t, config, rho, noise)
                       : curve_step(current, model, batch.x, batch.y, t, rho, noise);
    } catch (const NumericError& e) {
      throw DivergenceError(step, e.what());
    }
    if (config.repulsive_lambda > 0.0) {
      const auto rep = repulsive_gradient(current.points);
      result.loss += config.repulsive_lambda * repulsive_penalty(current.points);
      for (std::size_t i = 0; i < rep.size(); ++i) result.grads[i].noalias() += config.repulsive_lambda * rep[i];
    }
    if (!std::isfinite(result.loss)) throw DivergenceError(step, "non-finite loss");
    try {
      optimizer.step(current.points, result.grads, lr);
    } catch (const std::domain_error& e) {
      throw DivergenceError(step, e.what());
    }

    StepRecord rec{step, lr, result.loss, result.jsd, kNaN};
    const bool eval_now = (step + 1) % config.eval_every == 0 || step + 1 == config.total_steps;
    if (has_val && eval_now) {
      rec.val_ll = validation_ll(model, current, data.val, config.val_grid_points);
      if (rec.val_ll > report.best_val_ll) {
        report.best_val_ll = rec.val_ll;
        report.best_step = step + 1;
        report.final_points = current;
        evals_without_improvement = 0;
      } else {
        ++evals_without_improvement;
      }
    }
    report.steps.push_back(rec);
    if (has_val && config.patience > 0 && evals_without_improvement >= config.patience) {
      report.early_stopped = true;
      break;
    }
  }
  if (!has_val) {
    report.final_points = current;
    report.best_step = static_cast<std::int64_t>(report.steps.size());
    report.best_val_ll = kNaN;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

Rng init_rng(std::uint64_t seed) { return Rng(seed).split(kInitStream); }

Vector pretrain_anchor(const LoraModel& model, const Dataset& data, const TrainConfig& config, std::uint64_t seed,
                       TrainReport* report) {
  Rng rng = init_rng(seed);
  const ControlPointSet start = init_curve(CurveConfig(1, 0), CurveMode::Free, {}, model, rng);
  TrainConfig cfg = config;
  cfg.seed = seed;
  TrainReport r = train_curve(start, model, data, cfg);
  Vector theta = r.final_points.points.front();
  if (report != nullptr) *report = std::move(r);
  return theta;
}

}  // namespace lcurve
