// SPDX-License-Identifier: Apache-2.0
#include "lcurve/bma.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lcurve {

void GridPredictions::validate(double tol) const {
  if (grid.empty()) throw std::domain_error("grid predictions need at least one point");
  if (probs.size() != grid.size() || weights.size() != grid.size()) {
    throw std::domain_error("grid, probability and weight counts differ");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::domain_error("negative or NaN grid weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > tol) throw std::domain_error("grid weights do not sum to 1");
  for (const auto& p : probs) {
    if (p.rows() != probs.front().rows() || p.cols() != probs.front().cols()) {
      throw std::domain_error("grid distributions differ in shape");
    }
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      if ((p.row(r).array() < 0.0).any() || std::abs(p.row(r).sum() - 1.0) > tol) {
        throw std::domain_error("row is not a probability distribution");
      }
    }
  }
}

std::vector<double> temperature_weights(std::span<const double> data_loglik, double temperature) {
  if (!(temperature > 0.0)) throw std::domain_error("temperature must be positive");
  if (data_loglik.empty()) throw std::domain_error("no grid points");
  const auto m = data_loglik.size();
  for (double ll : data_loglik) {
    if (!std::isfinite(ll)) throw std::domain_error("non-finite log-likelihood");
  }
  if (std::isinf(temperature)) return std::vector<double>(m, 1.0 / static_cast<double>(m));
  const double mx = *std::max_element(data_loglik.begin(), data_loglik.end());
  std::vector<double> w(m);
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    w[j] = std::exp((data_loglik[j] - mx) / temperature);
    sum += w[j];
  }
  for (double& x : w) x /= sum;
  return w;
}

GridPredictions predict_grid(const LoraModel& model, const ControlPointSet& curve, const Matrix& inputs,
                             std::span<const double> grid) {
  GridPredictions out;
  out.grid.assign(grid.begin(), grid.end());
  out.probs.reserve(grid.size());
  for (double t : grid) out.probs.push_back(model.forward(eval_curve(curve, t), inputs).probs);
  out.weights.assign(grid.size(), 1.0 / static_cast<double>(grid.size()));
  return out;
}

std::vector<double> grid_data_loglik(const LoraModel& model, const ControlPointSet& curve, const Split& data,
                                     std::span<const double> grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  for (double t : grid) {
    const Prediction pred = model.forward(eval_curve(curve, t), data.x);
    double sum = 0.0;
    for (std::size_t i = 0; i < data.y.size(); ++i) sum += pred.log_probs(static_cast<Eigen::Index>(i), data.y[i]);
    out.push_back(sum);
  }
  return out;
}

Matrix bma_mixture(const GridPredictions& predictions) {
  if (predictions.probs.empty()) throw std::domain_error("no grid points");
  Matrix mix = Matrix::Zero(predictions.probs.front().rows(), predictions.probs.front().cols());
  for (std::size_t j = 0; j < predictions.probs.size(); ++j) {
    mix.noalias() += predictions.weights[j] * predictions.probs[j];
  }
  return mix;
}

Matrix bma_predict(const LoraModel& model, const ControlPointSet& curve, const Matrix& inputs,
                   std::span<const double> grid, double temperature, const Split* weight_data) {
  GridPredictions gp = predict_grid(model, curve, inputs, grid);
  if (!std::isinf(temperature)) {
    if (weight_data == nullptr) throw std::invalid_argument("finite temperature needs data for posterior weights");
    gp.weights = temperature_weights(grid_data_loglik(model, curve, *weight_data, grid), temperature);
  }
  return bma_mixture(gp);
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

MutualInformation mutual_information(const GridPredictions& predictions) {
  predictions.validate();
  const Matrix mix = bma_mixture(predictions);
  const Eigen::Index n = mix.rows();
  const Eigen::Index c = mix.cols();
  MutualInformation out;
  out.per_example.resize(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(c));
  auto row_entropy = [&](const Matrix& m, Eigen::Index r) {
    for (Eigen::Index k = 0; k < c; ++k) row[static_cast<std::size_t>(k)] = m(r, k);
    return entropy(row);
  };
  double total = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    double expected = 0.0;
    for (std::size_t j = 0; j < predictions.probs.size(); ++j) {
      expected += predictions.weights[j] * row_entropy(predictions.probs[j], r);
    }
    const double mi = std::max(0.0, row_entropy(mix, r) - expected);
    out.per_example[static_cast<std::size_t>(r)] = mi;
    total += mi;
  }
  out.mean = n > 0 ? total / static_cast<double>(n) : 0.0;
  return out;
}

double expected_calibration_error(const Matrix& probs, std::span<const int> labels, int num_bins) {
  if (probs.rows() == 0 || labels.empty()) throw std::domain_error("ECE of an empty dataset");
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) throw std::invalid_argument("label count mismatch");
  if (num_bins < 1) throw std::domain_error("ECE needs at least one bin");
  std::vector<double> conf_sum(static_cast<std::size_t>(num_bins), 0.0);
  std::vector<double> correct(static_cast<std::size_t>(num_bins), 0.0);
  std::vector<double> count(static_cast<std::size_t>(num_bins), 0.0);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index pred = 0;
    const double conf = probs.row(r).maxCoeff(&pred);
    if (!(conf >= 0.0 && conf <= 1.0 + 1e-12)) throw std::domain_error("confidence outside [0, 1]");
    const int bin = std::min(num_bins - 1, static_cast<int>(conf * num_bins));
    const auto b = static_cast<std::size_t>(bin);
    conf_sum[b] += conf;
    count[b] += 1.0;
    if (pred == labels[static_cast<std::size_t>(r)]) correct[b] += 1.0;
  }
  const auto n = static_cast<double>(probs.rows());
  double ece = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0.0) continue;
    ece += (count[b] / n) * std::abs(correct[b] / count[b] - conf_sum[b] / count[b]);
  }
  return ece;
}

double accuracy(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() == 0) throw std::domain_error("accuracy of an empty dataset");
  double hits = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index pred = 0;
    probs.row(r).maxCoeff(&pred);
    if (pred == labels[static_cast<std::size_t>(r)]) hits += 1.0;
  }
  return hits / static_cast<double>(probs.rows());
}

double mean_log_likelihood(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() == 0) throw std::domain_error("log-likelihood of an empty dataset");
  double sum = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    sum += std::log(probs(r, labels[static_cast<std::size_t>(r)]));
  }
  return sum / static_cast<double>(probs.rows());
}

MetricsReport evaluate_split(const LoraModel& model, const ControlPointSet& curve, const Split& eval,
                             const Split* weight_data, const EvalOptions& options) {
  const std::vector<double> grid =
      options.grid ? *options.grid : make_eval_grid(curve.config, options.grid_points);
  GridPredictions gp = predict_grid(model, curve, eval.x, grid);
  if (!std::isinf(options.temperature)) {
    if (weight_data == nullptr) throw std::invalid_argument("finite temperature needs data for posterior weights");
    gp.weights = temperature_weights(grid_data_loglik(model, curve, *weight_data, grid), options.temperature);
  }
  const Matrix mix = bma_mixture(gp);
  const MutualInformation mi = mutual_information(gp);
  MetricsReport report;
  report.accuracy = accuracy(mix, eval.y);
  report.log_likelihood = mean_log_likelihood(mix, eval.y);
  report.ece = expected_calibration_error(mix, eval.y, options.ece_bins);
  report.mutual_information = mi.mean;
  report.per_example_mi = mi.per_example;
  report.num_examples = static_cast<std::size_t>(eval.size());
  report.grid = gp.grid;
  report.weights = gp.weights;
  report.temperature = options.temperature;
  return report;
}

MetricsReport evaluate(const LoraModel& model, const ControlPointSet& curve, const Dataset& data,
                       const EvalOptions& options) {
  return evaluate_split(model, curve, data.test, &data.train, options);
}

}  // namespace lcurve
