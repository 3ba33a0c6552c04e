// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcurve/curve.hpp"

namespace lcurve {

struct Split {
  Matrix x;
  std::vector<int> y;

  Eigen::Index size() const noexcept { return x.rows(); }
  Split subset(const std::vector<Eigen::Index>& rows) const;
};

/// Synthetic classification data. For token tasks each row of `x` holds
/// integer token ids stored as doubles.
struct Dataset {
  std::string name;
  int num_classes = 2;
  int vocab_size = 0;
  Split train;
  Split val;
  Split test;
};

/// C isotropic unit-variance Gaussians centred on the vertices of a regular
/// simplex with edge length `separation`. Labels are assigned round-robin.
/// `test_n` examples are drawn from an independent stream.
Dataset gaussian_blobs(int n, int d, int num_classes, double separation, std::uint64_t seed, int test_n = -1);

/// Two concentric rings (radii 1 and 2) whose label flips between adjacent
/// quadrants: label = ring xor [x*y > 0]. Invariant under (x, y) -> (-x, -y)
/// for noise 0; not linearly separable. Gaussian jitter of std `noise`.
Dataset xor_rings(int n, double noise, std::uint64_t seed, int test_n = -1);

/// Uniform token sequences over `vocab` symbols labelled by the parity of the
/// number of occurrences of the marked symbol 1.
Dataset parity_sequences(int n, int len, int vocab, std::uint64_t seed, int test_n = -1);
int parity_label(const std::vector<int>& tokens);

/// Moves round(val_fraction * |train|) shuffled training rows into `val`.
/// Any existing validation rows are merged back into train first.
Dataset split(Dataset dataset, double val_fraction, std::uint64_t seed);

}  // namespace lcurve
