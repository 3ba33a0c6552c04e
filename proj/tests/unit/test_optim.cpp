// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lcurve/optim.hpp"

using namespace lcurve;

TEST(OneCycle, AnchorsOfTheSchedule) {
  OneCycleSchedule s{1000, 1e-4, 0.12, 300.0, 1e4};
  EXPECT_NEAR(s(0), 1e-4 / 300.0, 1e-20);
  EXPECT_NEAR(s(0), 3.33e-7, 1e-9);
  EXPECT_DOUBLE_EQ(s(120), 1e-4);
  EXPECT_NEAR(s(1000), 1e-4 / 300.0 / 1e4, 1e-22);
  EXPECT_THROW(s(-1), std::out_of_range);
  EXPECT_THROW(s(1001), std::out_of_range);
}

TEST(OneCycle, MatchesCosineOracleAndIsUnimodal) {
  OneCycleSchedule s{500, 2e-3, 0.3, 25.0, 1e4};
  const double lo = 2e-3 / 25.0, hi = 2e-3, end = lo / 1e4;
  const double warm = 0.3 * 500;
  double prev = s(0);
  bool descending = false;
  for (int k = 0; k <= 500; ++k) {
    double want;
    if (k <= warm) want = hi + (lo - hi) / 2 * (1 + std::cos(std::numbers::pi * k / warm));
    else want = end + (hi - end) / 2 * (1 + std::cos(std::numbers::pi * (k - warm) / (500 - warm)));
    EXPECT_NEAR(s(k), want, 1e-15);
    if (k > 0) {
      if (s(k) < prev) descending = true;
      if (descending) EXPECT_LE(s(k), prev);
      else EXPECT_GE(s(k), prev);
    }
    prev = s(k);
  }
  // Continuity across the warm-up boundary.
  OneCycleSchedule c{1000, 1e-4, 0.12, 300.0, 1e4};
  EXPECT_NEAR(c(119), c(120), 1e-7);
  EXPECT_NEAR(c(121), c(120), 1e-7);
}

TEST(AdamW, ZeroGradZeroDecayIsIdentity) {
  std::vector<Vector> p{Vector::LinSpaced(4, -1, 1)};
  const auto before = p;
  AdamW opt({0.9, 0.999, 1e-8, 0.0}, {false}, 4);
  opt.step(p, {Vector::Zero(4)}, 0.1);
  EXPECT_EQ(p[0], before[0]);
}

TEST(AdamW, FirstStepIsSignOfGradient) {
  std::vector<Vector> p{Vector::Zero(3)};
  Vector g(3);
  g << 2.0, -0.5, 1e-3;
  AdamW opt({0.9, 0.999, 1e-8, 0.0}, {false}, 3);
  opt.step(p, {g}, 0.01);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[0][i], -0.01 * (g[i] > 0 ? 1 : -1), 1e-7);
}

TEST(AdamW, QuadraticTrajectoryMatchesScalarOracle) {
  // f(x) = 0.5 * a * (x - c)^2, scalar re-implementation of decoupled AdamW.
  const double a = 3.0, c = 1.5, lr = 0.05, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double x = -2.0, m = 0, v = 0;
  std::vector<Vector> p{Vector::Constant(1, -2.0)};
  AdamW opt({b1, b2, eps, wd}, {false}, 1);
  for (int k = 1; k <= 200; ++k) {
    const double g = a * (x - c);
    x *= 1 - lr * wd;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, k)), vh = v / (1 - std::pow(b2, k));
    x -= lr * mh / (std::sqrt(vh) + eps);

    opt.step(p, {Vector::Constant(1, a * (p[0][0] - c))}, lr);
    ASSERT_NEAR(p[0][0], x, 1e-12) << "step " << k;
  }
  EXPECT_EQ(opt.steps_taken(), 200);
}

TEST(AdamW, FrozenSlotsUntouchedAndNoState) {
  std::vector<Vector> p{Vector::Ones(2), Vector::Ones(2)};
  AdamW opt({0.9, 0.999, 1e-8, 0.5}, {true, false}, 2);
  EXPECT_EQ(opt.slots()[0].m.size(), 0);
  opt.step(p, {Vector::Constant(2, std::nan("")), Vector::Ones(2)}, 0.1);
  EXPECT_EQ(p[0], Vector::Ones(2));
  EXPECT_NE(p[1], Vector::Ones(2));
  EXPECT_THROW(opt.step(p, {Vector::Zero(2), Vector::Constant(2, INFINITY)}, 0.1), std::domain_error);
}
