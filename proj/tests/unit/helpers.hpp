// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lcurve/network.hpp"
#include "lcurve/rng.hpp"

namespace lcurve::testing {

/// Random adapter with every coordinate drawn N(0, scale^2), so B is nonzero.
inline Vector random_theta(const LoraModel& model, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  Vector theta(model.adapter_dim());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = rng.normal(0.0, scale);
  return theta;
}

inline Matrix random_inputs(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

inline Matrix random_tokens(int n, int len, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, len);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<double>(rng.below(vocab));
  return x;
}

inline std::vector<int> random_labels(int n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(classes));
  return y;
}

inline std::vector<Vector> random_points(int count, Eigen::Index dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> pts(count, Vector(dim));
  for (auto& p : pts)
    for (Eigen::Index i = 0; i < dim; ++i) p[i] = rng.normal();
  return pts;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace lcurve::testing
