// SPDX-License-Identifier: Apache-2.0
#include "lcurve/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lcurve/rng.hpp"

namespace lcurve {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Regular simplex with unit edge, embedded in the first C-1 coordinates via
// the Helmert basis of the centred standard-basis vertices.
Matrix simplex_vertices(int num_classes, int dim) {
  Matrix v = Matrix::Zero(num_classes, dim);
  for (int i = 0; i < num_classes; ++i) {
    for (int k = 1; k < num_classes; ++k) {
      // Helmert row k: (1,...,1 [k times], -k, 0, ...) / sqrt(k(k+1)).
      const double norm = std::sqrt(static_cast<double>(k) * (k + 1));
      double coord = 0.0;
      if (i < k) coord = 1.0 / norm;
      else if (i == k) coord = -static_cast<double>(k) / norm;
      v(i, k - 1) = coord / std::sqrt(2.0);
    }
  }
  return v;
}

Split blob_split(int n, int dim, int num_classes, const Matrix& centres, Rng rng) {
  Split s;
  s.x.resize(n, dim);
  s.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % num_classes;
    s.y[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < dim; ++j) s.x(i, j) = centres(c, j) + rng.normal();
  }
  return s;
}

Split ring_split(int n, double noise, Rng rng) {
  Split s;
  s.x.resize(n, 2);
  s.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int ring = i % 2;
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const double radius = ring == 0 ? 1.0 : 2.0;
    const double x = radius * std::cos(angle);
    const double y = radius * std::sin(angle);
    const int quadrant = x * y > 0.0 ? 1 : 0;
    s.y[static_cast<std::size_t>(i)] = ring ^ quadrant;
    s.x(i, 0) = x + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
    s.x(i, 1) = y + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
  }
  return s;
}

Split parity_split(int n, int len, int vocab, Rng rng) {
  Split s;
  s.x.resize(n, len);
  s.y.resize(static_cast<std::size_t>(n));
  std::vector<int> tokens(static_cast<std::size_t>(len));
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < len; ++p) {
      tokens[static_cast<std::size_t>(p)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab)));
      s.x(i, p) = tokens[static_cast<std::size_t>(p)];
    }
    s.y[static_cast<std::size_t>(i)] = parity_label(tokens);
  }
  return s;
}

}  // namespace

Split Split::subset(const std::vector<Eigen::Index>& rows) const {
  Split out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    out.y[i] = y[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

Dataset gaussian_blobs(int n, int d, int num_classes, double separation, std::uint64_t seed, int test_n) {
  if (num_classes < 2) throw std::domain_error("gaussian_blobs needs at least two classes");
  if (!(separation > 0.0)) throw std::domain_error("separation must be positive");
  if (d < num_classes - 1) throw std::domain_error("dimension too small to embed the simplex");
  if (n < 1) throw std::domain_error("n must be positive");
  const Matrix centres = simplex_vertices(num_classes, d) * separation;
  const Rng root(seed);
  Dataset ds;
  ds.name = "gaussian_blobs";
  ds.num_classes = num_classes;
  ds.train = blob_split(n, d, num_classes, centres, root.split(1));
  ds.test = blob_split(test_n < 0 ? n : test_n, d, num_classes, centres, root.split(2));
  ds.val.x.resize(0, d);
  return ds;
}

Dataset xor_rings(int n, double noise, std::uint64_t seed, int test_n) {
  if (noise < 0.0) throw std::domain_error("noise must be non-negative");
  if (n < 1) throw std::domain_error("n must be positive");
  const Rng root(seed);
  Dataset ds;
  ds.name = "xor_rings";
  ds.num_classes = 2;
  ds.train = ring_split(n, noise, root.split(1));
  ds.test = ring_split(test_n < 0 ? n : test_n, noise, root.split(2));
  ds.val.x.resize(0, 2);
  return ds;
}

int parity_label(const std::vector<int>& tokens) {
  return static_cast<int>(std::count(tokens.begin(), tokens.end(), 1) % 2);
}

Dataset parity_sequences(int n, int len, int vocab, std::uint64_t seed, int test_n) {
  if (len < 2) throw std::domain_error("sequence length must be >= 2");
  if (vocab < 2) throw std::domain_error("vocabulary needs at least two symbols");
  if (n < 1) throw std::domain_error("n must be positive");
  const Rng root(seed);
  Dataset ds;
  ds.name = "parity_sequences";
  ds.num_classes = 2;
  ds.vocab_size = vocab;
  ds.train = parity_split(n, len, vocab, root.split(1));
  ds.test = parity_split(test_n < 0 ? n : test_n, len, vocab, root.split(2));
  ds.val.x.resize(0, len);
  return ds;
}

Dataset split(Dataset dataset, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::domain_error("validation fraction must be in [0, 1)");
  Split pool = dataset.train;
  if (dataset.val.size() > 0) {
    const Eigen::Index n0 = pool.size();
    pool.x.conservativeResize(n0 + dataset.val.size(), Eigen::NoChange);
    pool.x.bottomRows(dataset.val.size()) = dataset.val.x;
    pool.y.insert(pool.y.end(), dataset.val.y.begin(), dataset.val.y.end());
  }
  const Eigen::Index n = pool.size();
  const auto n_val = static_cast<Eigen::Index>(std::llround(val_fraction * static_cast<double>(n)));
  if (n - n_val < 1) throw std::domain_error("validation fraction leaves an empty training split");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  // Fisher-Yates with our own index draws keeps the split identical across
  // standard library implementations.
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<Eigen::Index> val_rows(order.begin(), order.begin() + n_val);
  std::vector<Eigen::Index> train_rows(order.begin() + n_val, order.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  dataset.val = pool.subset(val_rows);
  dataset.train = pool.subset(train_rows);
  return dataset;
}

}  // namespace lcurve
