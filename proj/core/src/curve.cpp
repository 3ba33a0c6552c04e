// SPDX-License-Identifier: Apache-2.0
#include "lcurve/curve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lcurve {

namespace {

void require_in_domain(double t, const CurveConfig& config) {
  if (!(t >= 0.0 && t <= config.t_max())) {
    throw std::domain_error("curve parameter t=" + std::to_string(t) + " outside [0, " +
                            std::to_string(config.t_max()) + "]");
  }
}

double int_pow(double base, int exponent) {
  double result = 1.0;
  for (int e = 0; e < exponent; ++e) result *= base;
  return result;
}

}  // namespace

CurveConfig::CurveConfig(int num_anchors, int handles_per_segment)
    : num_anchors_(num_anchors), handles_(handles_per_segment) {
  if (num_anchors < 1) throw std::domain_error("curve needs at least one anchor");
  if (handles_per_segment < 0) throw std::domain_error("handles per segment must be >= 0");
}

int CurveConfig::anchor_index(int anchor) const {
  if (anchor < 0 || anchor >= num_anchors_) throw std::out_of_range("anchor index out of range");
  return anchor * (handles_ + 1);
}

bool CurveConfig::is_anchor_index(int index) const noexcept {
  return index >= 0 && index < num_control_points() && index % (handles_ + 1) == 0;
}

std::vector<int> CurveConfig::anchor_indices() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(num_anchors_));
  for (int a = 0; a < num_anchors_; ++a) out.push_back(a * (handles_ + 1));
  return out;
}

ControlPointSet ControlPointSet::make_free(CurveConfig config, std::vector<Vector> points) {
  ControlPointSet set{config, std::move(points), {}};
  set.frozen.assign(set.points.size(), false);
  set.validate();
  return set;
}

ControlPointSet ControlPointSet::make_anchored(CurveConfig config, std::vector<Vector> points) {
  ControlPointSet set{config, std::move(points), {}};
  set.frozen.resize(set.points.size());
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    set.frozen[i] = config.is_anchor_index(static_cast<int>(i));
  }
  set.validate();
  return set;
}

int ControlPointSet::num_trainable() const noexcept {
  return static_cast<int>(std::count(frozen.begin(), frozen.end(), false));
}

void ControlPointSet::validate() const {
  const auto expected = static_cast<std::size_t>(config.num_control_points());
  if (points.size() != expected) {
    throw std::invalid_argument("expected " + std::to_string(expected) + " control points, got " +
                                std::to_string(points.size()));
  }
  if (frozen.size() != expected) throw std::invalid_argument("frozen flag count mismatch");
  for (const auto& p : points) {
    if (p.size() != points.front().size()) {
      throw std::invalid_argument("control points have differing dimensions");
    }
  }
  const bool any_frozen = std::find(frozen.begin(), frozen.end(), true) != frozen.end();
  if (!any_frozen) return;
  for (std::size_t i = 0; i < expected; ++i) {
    if (frozen[i] != config.is_anchor_index(static_cast<int>(i))) {
      throw std::invalid_argument("frozen flags must be all-false or exactly the anchor slots");
    }
  }
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (int j = 1; j <= k; ++j) {
    c = c * static_cast<double>(n - k + j) / static_cast<double>(j);
  }
  return c;
}

double bernstein_basis(int i, int degree, double t) {
  if (degree < 0 || i < 0 || i > degree) throw std::domain_error("Bernstein index out of range");
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("Bernstein parameter outside [0, 1]");
  return binomial(degree, i) * int_pow(1.0 - t, degree - i) * int_pow(t, i);
}

std::vector<double> bernstein_basis_vector(int degree, double t) {
  std::vector<double> out(static_cast<std::size_t>(degree) + 1);
  for (int i = 0; i <= degree; ++i) out[static_cast<std::size_t>(i)] = bernstein_basis(i, degree, t);
  return out;
}

SegmentLocation locate_segment(double t, const CurveConfig& config) {
  if (config.num_anchors() < 2) {
    throw std::logic_error("single-anchor curve has no segments; use the point directly");
  }
  require_in_domain(t, config);
  const int k = std::min(static_cast<int>(std::floor(t)), config.num_anchors() - 2);
  return {k, t - static_cast<double>(k)};
}

std::vector<ControlPointWeight> control_point_weights(double t, const CurveConfig& config) {
  if (config.num_anchors() == 1) {
    require_in_domain(t, config);
    return {{0, 1.0}};
  }
  const SegmentLocation loc = locate_segment(t, config);
  const int degree = config.segment_degree();
  const int first = loc.segment * degree;
  std::vector<ControlPointWeight> out;
  out.reserve(static_cast<std::size_t>(degree) + 1);
  for (int i = 0; i <= degree; ++i) out.push_back({first + i, bernstein_basis(i, degree, loc.tau)});
  return out;
}

Vector eval_curve(const ControlPointSet& points, double t) {
  if (points.points.size() != static_cast<std::size_t>(points.config.num_control_points())) {
    throw std::invalid_argument("control point count does not match curve config");
  }
  Vector out = Vector::Zero(points.dimension());
  for (const auto& [index, weight] : control_point_weights(t, points.config)) {
    const Vector& p = points.points[static_cast<std::size_t>(index)];
    if (p.size() != out.size()) throw std::invalid_argument("control point dimension mismatch");
    out.noalias() += weight * p;
  }
  return out;
}

Vector eval_curve_derivative(const ControlPointSet& points, double t, Side side) {
  const CurveConfig& config = points.config;
  if (config.num_anchors() == 1) {
    require_in_domain(t, config);
    return Vector::Zero(points.dimension());
  }
  SegmentLocation loc = locate_segment(t, config);
  // An interior join resolves to the right segment at tau = 0; step back for
  // the left-hand derivative.
  if (side == Side::Left && loc.tau == 0.0 && loc.segment > 0) {
    loc = {loc.segment - 1, 1.0};
  }
  const int degree = config.segment_degree();
  const int first = loc.segment * degree;
  Vector out = Vector::Zero(points.dimension());
  for (int i = 0; i < degree; ++i) {
    const double b = bernstein_basis(i, degree - 1, loc.tau);
    const auto lo = static_cast<std::size_t>(first + i);
    out.noalias() += (static_cast<double>(degree) * b) * (points.points[lo + 1] - points.points[lo]);
  }
  return out;
}

std::vector<double> make_eval_grid(const CurveConfig& config, std::optional<int> num_points) {
  const int m = num_points.value_or(2 * config.num_control_points() - 1);
  if (m < 1) throw std::domain_error("grid needs at least one point");
  if (config.num_anchors() == 1) return {0.0};
  if (m == 1) return {0.0};
  std::vector<double> grid(static_cast<std::size_t>(m));
  const double t_max = config.t_max();
  for (int j = 0; j < m; ++j) {
    grid[static_cast<std::size_t>(j)] = t_max * static_cast<double>(j) / static_cast<double>(m - 1);
  }
  grid.back() = t_max;
  return grid;
}

std::vector<double> anchor_grid(const CurveConfig& config) {
  std::vector<double> grid;
  for (int a = 0; a < config.num_anchors(); ++a) grid.push_back(static_cast<double>(a));
  return grid;
}

}  // namespace lcurve
