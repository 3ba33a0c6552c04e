// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "lcurve/curve.hpp"
#include "lcurve/rng.hpp"

namespace {

lcurve::ControlPointSet random_curve(int anchors, int handles, Eigen::Index dim) {
  lcurve::Rng rng(1);
  const lcurve::CurveConfig cc(anchors, handles);
  std::vector<lcurve::Vector> pts;
  for (int i = 0; i < cc.num_control_points(); ++i) {
    lcurve::Vector v(dim);
    for (Eigen::Index k = 0; k < dim; ++k) v[k] = rng.normal();
    pts.push_back(v);
  }
  return lcurve::ControlPointSet::make_free(cc, pts);
}

void BM_EvalCurve(benchmark::State& state) {
  const auto cps = random_curve(5, static_cast<int>(state.range(1)), state.range(0));
  double t = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lcurve::eval_curve(cps, t));
    t += 0.37;
    if (t > cps.config.t_max()) t -= cps.config.t_max();
  }
  state.SetBytesProcessed(state.iterations() * state.range(0) * static_cast<int64_t>(sizeof(double)) *
                          (state.range(1) + 2));
}
BENCHMARK(BM_EvalCurve)->Args({1000, 1})->Args({10000, 1})->Args({10000, 3})->Args({100000, 3});

void BM_EvalCurveDerivative(benchmark::State& state) {
  const auto cps = random_curve(5, 2, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lcurve::eval_curve_derivative(cps, 1.3));
}
BENCHMARK(BM_EvalCurveDerivative)->Arg(10000);

void BM_BernsteinWeights(benchmark::State& state) {
  const lcurve::CurveConfig cc(9, static_cast<int>(state.range(0)));
  double t = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lcurve::control_point_weights(t, cc));
    t = t > 7.9 ? 0.0 : t + 0.013;
  }
}
BENCHMARK(BM_BernsteinWeights)->Arg(0)->Arg(3);

}  // namespace
