// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace lcurve {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Shape of a segmented Bezier curve: N anchors joined by N-1 segments, each
/// segment carrying m interior handles (segment degree m+1).
///
/// Control points are laid out flat: anchor a sits at index a*(m+1), the
/// handles of segment k occupy k*(m+1)+1 .. k*(m+1)+m. The global curve
/// parameter ranges over [0, N-1].
class CurveConfig {
 public:
  CurveConfig(int num_anchors, int handles_per_segment);

  int num_anchors() const noexcept { return num_anchors_; }
  int handles_per_segment() const noexcept { return handles_; }
  int num_segments() const noexcept { return num_anchors_ - 1; }
  int num_control_points() const noexcept { return num_segments() * (handles_ + 1) + 1; }
  int segment_degree() const noexcept { return handles_ + 1; }
  double t_max() const noexcept { return static_cast<double>(num_segments()); }

  int anchor_index(int anchor) const;
  bool is_anchor_index(int index) const noexcept;
  std::vector<int> anchor_indices() const;

  friend bool operator==(const CurveConfig&, const CurveConfig&) = default;

 private:
  int num_anchors_;
  int handles_;
};

struct SegmentLocation {
  int segment = 0;
  double tau = 0.0;
};

/// Which one-sided derivative to take at an anchor join.
enum class Side { Left, Right };

/// Control points of a curve over flattened adapter vectors. Anchors may be
/// frozen (anchored curves); otherwise every point is trainable.
struct ControlPointSet {
  CurveConfig config;
  std::vector<Vector> points;
  std::vector<bool> frozen;

  /// All points trainable.
  static ControlPointSet make_free(CurveConfig config, std::vector<Vector> points);
  /// Anchor slots frozen, handles trainable.
  static ControlPointSet make_anchored(CurveConfig config, std::vector<Vector> points);

  Eigen::Index dimension() const noexcept { return points.empty() ? 0 : points.front().size(); }
  int num_trainable() const noexcept;
  /// Throws std::invalid_argument on shape or freeze-pattern violations.
  void validate() const;
};

double binomial(int n, int k);

/// C(degree,i) (1-t)^(degree-i) t^i.
double bernstein_basis(int i, int degree, double t);
/// All degree+1 basis values at t.
std::vector<double> bernstein_basis_vector(int degree, double t);

SegmentLocation locate_segment(double t, const CurveConfig& config);

Vector eval_curve(const ControlPointSet& points, double t);

/// d/dt of the curve. At an interior anchor join the derivative of the
/// segment on `side` is returned; at t = 0 and t = t_max the only available
/// side is used regardless of the flag. A single-point curve has derivative 0.
Vector eval_curve_derivative(const ControlPointSet& points, double t, Side side = Side::Right);

struct ControlPointWeight {
  int index = 0;
  double weight = 0.0;
};

/// Non-zero Bernstein weights of the active segment at t. The curve value is
/// sum(weight * points[index]) and the chain rule routes parameter gradients
/// to control points with the same weights.
std::vector<ControlPointWeight> control_point_weights(double t, const CurveConfig& config);

/// M equispaced t values over [0, t_max], endpoints included. Default
/// M = 2*N_cp - 1 places a point on every control point position and one
/// between each adjacent pair.
std::vector<double> make_eval_grid(const CurveConfig& config, std::optional<int> num_points = std::nullopt);

/// The integer t values of the anchors, {0, 1, ..., N-1}.
std::vector<double> anchor_grid(const CurveConfig& config);

}  // namespace lcurve
