// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcurve/curve.hpp"
#include "lcurve/data.hpp"
#include "lcurve/network.hpp"

namespace lcurve {

inline constexpr double kInfiniteTemperature = std::numeric_limits<double>::infinity();

/// Per-grid-point predictive distributions for a batch of inputs.
struct GridPredictions {
  std::vector<double> grid;
  /// probs[j] is n x C, the softmax output at grid[j].
  std::vector<Matrix> probs;
  /// Quadrature / posterior weights, one per grid point, summing to 1.
  std::vector<double> weights;

  std::size_t num_points() const noexcept { return grid.size(); }
  /// Throws std::domain_error if a distribution or the weights are invalid.
  void validate(double tol = 1e-9) const;
};

struct MutualInformation {
  std::vector<double> per_example;
  double mean = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double log_likelihood = 0.0;
  double ece = 0.0;
  double mutual_information = 0.0;
  std::size_t num_examples = 0;
  std::vector<double> grid;
  std::vector<double> weights;
  double temperature = kInfiniteTemperature;
  std::vector<double> per_example_mi;
};

/// Softmax of loglik/T with max subtraction. T = +inf gives exactly 1/M.
std::vector<double> temperature_weights(std::span<const double> data_loglik, double temperature);

/// Softmax outputs along the curve at each grid point, uniform weights.
GridPredictions predict_grid(const LoraModel& model, const ControlPointSet& curve, const Matrix& inputs,
                             std::span<const double> grid);

/// Summed log-likelihood of (x, y) at each grid point: log p(D | t_j).
std::vector<double> grid_data_loglik(const LoraModel& model, const ControlPointSet& curve, const Split& data,
                                     std::span<const double> grid);

/// sum_j w_j p_j.
Matrix bma_mixture(const GridPredictions& predictions);

/// Posterior-predictive mixture along the curve. For finite T the weights
/// come from `weight_data` (usually the training split).
Matrix bma_predict(const LoraModel& model, const ControlPointSet& curve, const Matrix& inputs,
                   std::span<const double> grid, double temperature = kInfiniteTemperature,
                   const Split* weight_data = nullptr);

double entropy(std::span<const double> p);

/// BALD: H[sum_j w_j p_j] - sum_j w_j H[p_j], natural log, per example and
/// averaged. Tiny negative values from rounding are clamped to 0.
MutualInformation mutual_information(const GridPredictions& predictions);

/// Equal-width bins over top-1 confidence; sum_b (n_b/n) |acc_b - conf_b|.
double expected_calibration_error(const Matrix& probs, std::span<const int> labels, int num_bins = 15);

double accuracy(const Matrix& probs, std::span<const int> labels);
/// Mean log p(y|x) of the given distributions.
double mean_log_likelihood(const Matrix& probs, std::span<const int> labels);

struct EvalOptions {
  /// Grid size; default 2*N_cp - 1.
  std::optional<int> grid_points;
  /// Explicit grid, overriding grid_points (e.g. the anchor grid for DE).
  std::optional<std::vector<double>> grid;
  double temperature = kInfiniteTemperature;
  int ece_bins = 15;
};

/// Metrics of the curve's BMA on `data.test`; posterior weights for finite
/// T use `data.train`.
MetricsReport evaluate(const LoraModel& model, const ControlPointSet& curve, const Dataset& data,
                       const EvalOptions& options = {});

/// Same metrics on an arbitrary split.
MetricsReport evaluate_split(const LoraModel& model, const ControlPointSet& curve, const Split& eval,
                             const Split* weight_data, const EvalOptions& options = {});

}  // namespace lcurve
