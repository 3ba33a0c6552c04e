// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "lcurve/data.hpp"
#include "lcurve/trainer.hpp"

namespace {

using namespace lcurve;

struct Fixture {
  NetworkSpec spec = NetworkSpec::mlp(4, {32, 32}, 4, 8);
  LoraModel model{spec, BaseWeights::random(spec, 1)};
  Dataset data = gaussian_blobs(256, 4, 4, 3.0, 1);
  ControlPointSet curve{CurveConfig(1, 0), {}, {}};

  explicit Fixture(CurveConfig cc) {
    Rng rng(2);
    curve = init_curve(cc, CurveMode::Free, {}, model, rng);
  }
};

void BM_CurveStep(benchmark::State& state) {
  Fixture f(CurveConfig(3, 1));
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  const Matrix x = f.data.train.x.topRows(batch);
  const std::vector<int> y(f.data.train.y.begin(), f.data.train.y.begin() + batch);
  for (auto _ : state) benchmark::DoNotOptimize(curve_step(f.curve, f.model, x, y, 0.7));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_CurveStep)->Arg(16)->Arg(256);

void BM_JsdStep(benchmark::State& state) {
  Fixture f(CurveConfig(3, 1));
  const Matrix x = f.data.train.x.topRows(16);
  const std::vector<int> y(f.data.train.y.begin(), f.data.train.y.begin() + 16);
  TrainConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(jsd_step(f.curve, f.model, x, y, 0.7, cfg));
}
BENCHMARK(BM_JsdStep);

void BM_TrainCurve(benchmark::State& state) {
  Fixture f(CurveConfig(3, 1));
  const Dataset data = split(f.data, 0.1, 1);
  TrainConfig cfg;
  cfg.total_steps = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(train_curve(f.curve, f.model, data, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainCurve)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace
