// SPDX-License-Identifier: Apache-2.0
#include "lcurve_cli/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

namespace lcurve::cli {

Dataset prepare_data(const DatasetConfig& config, double val_fraction) {
  return split(make_dataset(config), val_fraction, config.seed);
}

LoraModel make_model(const NetworkConfig& network, const Dataset& data) {
  const NetworkSpec spec = make_network_spec(network, data);
  return LoraModel(spec, BaseWeights::random(spec, network.base_seed));
}

EvalOptions eval_options(const Method& method, const InferenceConfig& inference) {
  EvalOptions o;
  o.temperature = inference.temperature;
  if (method.kind == MethodKind::DE) {
    o.grid = anchor_grid(method.curve_config());
  } else {
    o.grid_points = inference.grid_points;
  }
  return o;
}

ControlPointSet build_curve(const Method& method, const LoraModel& model, const Dataset& data,
                            const std::vector<Vector>& anchors, const TrainConfig& anchor_train,
                            const TrainConfig& curve_train, std::uint64_t seed, TrainReport* report) {
  const CurveConfig cc = method.curve_config();
  if (method.needs_anchors() && anchors.size() != static_cast<std::size_t>(method.num_anchors)) {
    throw ConfigError(method.str() + " needs " + std::to_string(method.num_anchors) + " anchors, got " +
                      std::to_string(anchors.size()));
  }
  switch (method.kind) {
    case MethodKind::MAP: {
      Vector theta = anchors.empty() ? pretrain_anchor(model, data, anchor_train, seed, report) : anchors.front();
      return ControlPointSet::make_free(cc, {std::move(theta)});
    }
    case MethodKind::DE:
    case MethodKind::Lin:
      return ControlPointSet::make_anchored(cc, anchors);
    case MethodKind::ALC:
    case MethodKind::FLC: {
      Rng rng = init_rng(seed);
      const auto mode = method.kind == MethodKind::ALC ? CurveMode::Anchored : CurveMode::Free;
      ControlPointSet init = init_curve(cc, mode, anchors, model, rng);
      if (!method.trains()) return init;
      TrainConfig tc = curve_train;
      tc.seed = seed;
      TrainReport r = train_curve(init, model, data, tc);
      ControlPointSet out = r.final_points;
      if (report) *report = std::move(r);
      return out;
    }
  }
  throw ConfigError("unhandled method");
}

DerivedSeeds DerivedSeeds::from(std::int64_t seed) {
  if (seed < 0) throw std::invalid_argument("negative seed " + std::to_string(seed));
  const auto s = static_cast<std::uint64_t>(seed);
  return DerivedSeeds{s, s, 1000 + s};
}

SeedRun run_seed(const ExperimentConfig& config, const std::vector<Method>& methods, std::int64_t seed) {
  SeedRun run;
  run.seed = seed;
  for (const auto& m : methods) run.methods.push_back(MethodRun{m, false, "", {CurveConfig(1, 0), {}, {}}, {}, {}});
  auto fail_all = [&](const std::string& what) {
    for (auto& m : run.methods) {
      m.ok = false;
      m.error = what;
    }
  };
  try {
    const DerivedSeeds seeds = DerivedSeeds::from(seed);
    DatasetConfig dc = config.dataset;
    dc.seed = seeds.data;
    NetworkConfig nc = config.network;
    nc.base_seed = seeds.base;
    run.data = prepare_data(dc, config.curve_train.val_fraction);
    run.model.emplace(make_model(nc, run.data));

    int needed = 0;
    for (const auto& m : methods) {
      if (m.needs_anchors()) needed = std::max(needed, m.num_anchors);
      if (m.kind == MethodKind::MAP) needed = std::max(needed, 1);
    }
    for (int i = 1; i <= needed; ++i) {
      run.anchors.push_back(pretrain_anchor(*run.model, run.data, config.anchor_train, seeds.anchor(i)));
    }

    for (auto& mr : run.methods) {
      try {
        std::vector<Vector> anchors;
        if (mr.method.needs_anchors()) {
          anchors.assign(run.anchors.begin(), run.anchors.begin() + mr.method.num_anchors);
        } else if (mr.method.kind == MethodKind::MAP) {
          anchors.push_back(run.anchors.front());
        }
        mr.curve = build_curve(mr.method, *run.model, run.data, anchors, config.anchor_train, config.curve_train,
                               seeds.curve, &mr.report);
        mr.metrics = evaluate(*run.model, mr.curve, run.data, eval_options(mr.method, config.inference));
        mr.ok = true;
      } catch (const std::exception& e) {
        mr.ok = false;
        mr.error = e.what();
      }
    }
  } catch (const std::exception& e) {
    fail_all(e.what());
  }
  return run;
}

std::vector<SeedRun> run_sweep(const ExperimentConfig& config, const std::vector<Method>& methods,
                               const std::vector<std::int64_t>& seeds, int workers) {
  std::vector<SeedRun> results(seeds.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) results[i] = run_seed(config, methods, seeds[i]);
  };
  const auto width = static_cast<std::size_t>(std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(seeds.size(), 1)));
  if (width == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < width; ++w) pool.emplace_back(work);
  }
  return results;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (v.empty()) return {nan, nan};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, nan};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<Method>& methods, const std::vector<SeedRun>& runs) {
  std::vector<SummaryRow> rows;
  for (std::size_t k = 0; k < methods.size(); ++k) {
    SummaryRow row;
    row.method = methods[k].str();
    std::vector<double> acc, ll, ece, mi;
    for (const auto& run : runs) {
      const auto& mr = run.methods.at(k);
      if (!mr.ok) {
        ++row.failed;
        continue;
      }
      ++row.runs;
      acc.push_back(mr.metrics.accuracy);
      ll.push_back(mr.metrics.log_likelihood);
      ece.push_back(mr.metrics.ece);
      mi.push_back(mr.metrics.mutual_information);
    }
    std::tie(row.acc_mean, row.acc_std) = mean_std(acc);
    std::tie(row.ll_mean, row.ll_std) = mean_std(ll);
    std::tie(row.ece_mean, row.ece_std) = mean_std(ece);
    std::tie(row.mi_mean, row.mi_std) = mean_std(mi);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace lcurve::cli
