// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "lcurve/profiler.hpp"
#include "lcurve/trainer.hpp"

using namespace lcurve;
using namespace lcurve::testing;

namespace {

LoraModel profiler_mlp() {
  const auto spec = NetworkSpec::mlp(3, {6}, 3, 2);
  return LoraModel(spec, BaseWeights::random(spec, 12));
}

LossProfile synthetic_profile(std::vector<double> loss) {
  LossProfile p;
  for (std::size_t i = 0; i < loss.size(); ++i) p.t.push_back(static_cast<double>(i) / (loss.size() - 1));
  p.loss = loss;
  p.accuracy.assign(loss.size(), 0.5);
  p.grad_norm.assign(loss.size(), 0.0);
  p.speed_left.assign(loss.size(), 0.0);
  p.speed_right.assign(loss.size(), 0.0);
  for (double l : loss) p.delta.push_back(l - loss.front());
  p.anchor_index = {0, loss.size() - 1};
  return p;
}

}  // namespace

TEST(Profile, ConstantCurveIsFlat) {
  const auto model = profiler_mlp();
  const auto data = gaussian_blobs(50, 3, 3, 3.0, 1);
  const Vector theta = random_theta(model, 1);
  const auto cps = ControlPointSet::make_free(CurveConfig(3, 1), std::vector<Vector>(5, theta));
  const auto p = profile(model, cps, data.train, 21);
  EXPECT_EQ(p.size(), 41u);
  EXPECT_EQ(p.anchor_index, (std::vector<std::size_t>{0, 20, 40}));
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(p.loss[i], p.loss[0], 1e-12);
    EXPECT_EQ(p.speed_left[i], 0.0);
    EXPECT_EQ(p.speed_right[i], 0.0);
    if (i > 0) EXPECT_GT(p.t[i], p.t[i - 1]);
  }
  EXPECT_EQ(p.delta[0], 0.0);
  const auto lip = lipschitz_check(p);
  EXPECT_EQ(lip.violations, 0u);
}

TEST(Profile, ConvexLinearModelHasNoBarrier) {
  auto spec = NetworkSpec::mlp(3, {}, 3, 3);
  const LoraModel model(spec, BaseWeights::random(spec, 2));
  const auto data = gaussian_blobs(80, 3, 3, 3.0, 2);
  for (int trial = 0; trial < 5; ++trial) {
    // A full-rank adapter on a single linear layer keeps the loss convex in W,
    // and W is affine in t when only B moves: fix A identical at both ends.
    auto fa = model.unflatten(random_theta(model, 10 + trial, 1.0));
    auto fb = fa;
    fb.b[0] = model.unflatten(random_theta(model, 20 + trial, 1.0)).b[0];
    const auto lin = ControlPointSet::make_anchored(CurveConfig(2, 0), {model.flatten(fa), model.flatten(fb)});
    const auto p = profile(model, lin, data.train, 51);
    const double end_max = std::max(p.loss.front(), p.loss.back());
    for (double l : p.loss) EXPECT_LE(l, end_max + 1e-12);
    EXPECT_NEAR(barrier(p, anchor_grid(lin.config)).barrier, 0.0, 1e-12);
  }
}

TEST(Profile, GradNormAndSpeedMatchDirectComputation) {
  const auto model = profiler_mlp();
  const auto data = gaussian_blobs(40, 3, 3, 3.0, 3);
  std::vector<Vector> pts;
  for (int i = 0; i < 5; ++i) pts.push_back(random_theta(model, 30 + i));
  const auto cps = ControlPointSet::make_free(CurveConfig(3, 1), pts);
  const auto p = profile(model, cps, data.train, 11);
  const std::size_t k = 13;  // interior of the second segment
  const double t = p.t[k];
  const Vector theta = eval_curve(cps, t);
  const auto w = model.materialize_weights(theta);
  const auto tape = model.forward_tape(w, data.train.x);
  const auto gw = model.backward_weights(w, tape, cross_entropy_logit_grad(tape.prediction.probs, data.train.y));
  EXPECT_NEAR(p.grad_norm[k], site_norm(gw), 1e-12);
  const auto vel = model.weight_velocity(theta, eval_curve_derivative(cps, t));
  EXPECT_NEAR(p.speed_left[k], site_norm(vel), 1e-12);
  EXPECT_EQ(p.speed_left[k], p.speed_right[k]);
  // At the join the two one-sided speeds generally differ.
  EXPECT_NE(p.speed_left[10], p.speed_right[10]);
}

TEST(Barrier, Arithmetic) {
  const auto mono = synthetic_profile({1.0, 0.8, 0.5, 0.3, 0.1});
  EXPECT_EQ(barrier(mono, std::vector<double>{0.0, 1.0}).barrier, 0.0);
  const auto peak = synthetic_profile({0.4, 0.7, 1.0, 0.6, 0.2});
  const auto r = barrier(peak, std::vector<double>{0.0, 1.0});
  EXPECT_NEAR(r.barrier, 0.6, 1e-15);
  EXPECT_EQ(r.t_at_max, 0.5);
  EXPECT_EQ(r.path_max, 1.0);
  EXPECT_EQ(r.anchor_max, 0.4);
  EXPECT_THROW(barrier(peak, std::vector<double>{0.3}), std::domain_error);
  EXPECT_THROW(barrier(LossProfile{}, std::vector<double>{0.0}), std::domain_error);
}

TEST(Lipschitz, QuadraticAlongLinearPathMatchesClosedForm) {
  // l(u) = u^2 on a unit-speed path: ||grad|| = 2u, integral over [s, t] = t^2 - s^2.
  auto p = synthetic_profile(std::vector<double>(1001, 0.0));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double u = p.t[i];
    p.loss[i] = u * u;
    p.grad_norm[i] = 2 * u;
    p.speed_left[i] = p.speed_right[i] = 1.0;
  }
  EXPECT_NEAR(path_integral(p, 0, 1000), 1.0, 1e-6);
  EXPECT_NEAR(path_integral(p, 250, 750), 0.75 * 0.75 - 0.25 * 0.25, 1e-6);
  const auto r = lipschitz_check(p);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_GT(r.pairs_checked, 0u);
}

TEST(Lipschitz, DetectsFabricatedViolation) {
  auto p = synthetic_profile({0.0, 0.0, 1.0, 0.0, 0.0});
  for (std::size_t i = 0; i < p.size(); ++i) {
    p.grad_norm[i] = 0.1;
    p.speed_left[i] = p.speed_right[i] = 1.0;
  }
  const auto r = lipschitz_check(p);
  EXPECT_GT(r.violations, 0u);
  EXPECT_LT(r.worst_slack, 0.0);
}

TEST(Continuity, ShrinksLinearlyAndVanishes) {
  const auto model = profiler_mlp();
  std::vector<Vector> pts;
  for (int i = 0; i < 5; ++i) pts.push_back(random_theta(model, 60 + i));
  const auto cps = ControlPointSet::make_free(CurveConfig(3, 1), pts);
  const Matrix x = random_inputs(1, 3, 5);
  const std::vector<double> eps{1e-2, 5e-3, 2.5e-3, 1e-8, 0.0};
  const auto rows = continuity_probe(model, cps, x, 0.6, eps);
  ASSERT_EQ(rows.size(), eps.size());
  EXPECT_NEAR(rows[1].tv_plus / rows[0].tv_plus, 0.5, 0.1);
  EXPECT_NEAR(rows[2].tv_plus / rows[1].tv_plus, 0.5, 0.1);
  EXPECT_LT(rows[3].tv_plus, 1e-6);
  EXPECT_EQ(rows[4].tv_plus, 0.0);
  EXPECT_EQ(rows[4].tv_minus, 0.0);
  // Across the join at t = 1 the one-sided divergences still vanish.
  const auto join = continuity_probe(model, cps, x, 1.0, std::vector<double>{1e-3, 1e-8});
  EXPECT_LT(join[1].tv_plus, 1e-6);
  EXPECT_LT(join[1].tv_minus, 1e-6);
  const auto edge = continuity_probe(model, cps, x, 2.0, std::vector<double>{1e-3});
  EXPECT_TRUE(std::isnan(edge[0].tv_plus));
}

TEST(ProbabilityEvolution, AnchorsAndNormalization) {
  const auto model = profiler_mlp();
  const std::vector<Vector> anchors{random_theta(model, 1), random_theta(model, 2), random_theta(model, 3)};
  Rng rng(4);
  const auto alc = init_curve(CurveConfig(3, 1), CurveMode::Anchored, anchors, model, rng);
  const Matrix x = random_inputs(4, 3, 6);
  const auto grid = make_eval_grid(alc.config);
  const auto ev = probability_evolution(model, alc, x, grid);
  ASSERT_EQ(ev.probs.size(), 4u);
  const Matrix p0 = model.forward(anchors[0], x).probs;
  const Matrix p1 = model.forward(anchors[1], x).probs;
  for (int e = 0; e < 4; ++e) {
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(ev.probs[e][0][c], p0(e, c));
      EXPECT_EQ(ev.probs[e][4][c], p1(e, c));  // grid[4] == 1.0
    }
    for (const auto& row : ev.probs[e]) EXPECT_NEAR(row[0] + row[1] + row[2], 1.0, 1e-12);
  }
  EXPECT_EQ(grid[4], 1.0);
}
