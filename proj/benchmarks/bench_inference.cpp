// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <vector>

#include "lcurve/bma.hpp"
#include "lcurve/profiler.hpp"
#include "lcurve/trainer.hpp"

namespace {

using namespace lcurve;

void BM_Evaluate(benchmark::State& state) {
  const auto spec = NetworkSpec::mlp(4, {32}, 4, 8);
  const LoraModel model(spec, BaseWeights::random(spec, 1));
  const Dataset data = gaussian_blobs(200, 4, 4, 3.0, 1, static_cast<int>(state.range(0)));
  Rng rng(3);
  const auto curve = init_curve(CurveConfig(3, 1), CurveMode::Free, {}, model, rng);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(model, curve, data));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Evaluate)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_TemperatureWeights(benchmark::State& state) {
  std::vector<double> ll(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < ll.size(); ++i) ll[i] = -1000.0 - static_cast<double>(i);
  for (auto _ : state) benchmark::DoNotOptimize(temperature_weights(ll, 1.0));
}
BENCHMARK(BM_TemperatureWeights)->Arg(9)->Arg(129);

void BM_Profile(benchmark::State& state) {
  const auto spec = NetworkSpec::mlp(2, {32, 32}, 2, 8);
  const LoraModel model(spec, BaseWeights::random(spec, 1));
  const Dataset data = xor_rings(500, 0.0, 1);
  Rng rng(4);
  const auto curve = init_curve(CurveConfig(3, 1), CurveMode::Free, {}, model, rng);
  for (auto _ : state) benchmark::DoNotOptimize(profile(model, curve, data.train, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_Profile)->Arg(101)->Unit(benchmark::kMillisecond);

}  // namespace
