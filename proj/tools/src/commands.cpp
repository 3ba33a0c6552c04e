// SPDX-License-Identifier: Apache-2.0
#include "lcurve_cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "lcurve/checkpoint.hpp"
#include "lcurve/csv.hpp"
#include "lcurve/errors.hpp"
#include "lcurve/profiler.hpp"
#include "lcurve/serialization.hpp"
#include "lcurve_cli/experiment.hpp"

namespace lcurve::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFormat = "lcurve-anchor-manifest";

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed to write '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json dataset_json(const DatasetConfig& d) {
  ExperimentConfig c;
  c.dataset = d;
  return to_json(c).at("dataset");
}

json train_summary(const TrainReport& r) {
  return {{"steps_run", r.steps.size()},
          {"best_step", r.best_step},
          {"best_val_ll", r.best_val_ll},
          {"early_stopped", r.early_stopped}};
}

std::uint64_t single_seed(const ExperimentConfig& config, const char* command) {
  if (config.seeds.size() != 1) throw ConfigError(std::string(command) + " takes exactly one seed");
  if (config.seeds.front() < 0) throw ConfigError("seeds must be non-negative");
  return static_cast<std::uint64_t>(config.seeds.front());
}

Checkpoint load_existing(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint '" + path.string() + "' does not exist");
  try {
    return load_checkpoint(path);
  } catch (const FormatError& e) {
    throw ConfigError("checkpoint '" + path.string() + "': " + e.what());
  }
}

bool same_base(const BaseWeights& a, const BaseWeights& b) {
  auto eq = [](const auto& x, const auto& y) { return x.rows() == y.rows() && x.cols() == y.cols() && x == y; };
  if (a.site_weights().size() != b.site_weights().size() || a.biases().size() != b.biases().size()) return false;
  for (std::size_t i = 0; i < a.site_weights().size(); ++i) {
    if (!eq(a.site_weights()[i], b.site_weights()[i])) return false;
  }
  for (std::size_t i = 0; i < a.biases().size(); ++i) {
    if (!eq(a.biases()[i], b.biases()[i])) return false;
  }
  return eq(a.token_embedding(), b.token_embedding()) && eq(a.position_embedding(), b.position_embedding());
}

struct LoadedAnchors {
  std::vector<Vector> points;
  std::vector<std::uint64_t> seeds;
  BaseWeights base;
  NetworkSpec spec;
};

LoadedAnchors load_anchors(const fs::path& manifest_path, const NetworkSpec& expected_spec,
                           const DatasetConfig& dataset) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("anchor manifest '" + manifest_path.string() + "' not found; run train-anchors first");
  json manifest;
  try {
    manifest = json::parse(in);
    if (manifest.at("format") != kManifestFormat) throw ConfigError("not an anchor manifest");
  } catch (const json::exception& e) {
    throw ConfigError("anchor manifest '" + manifest_path.string() + "': " + e.what());
  }
  if (manifest.at("dataset") != dataset_json(dataset)) {
    throw ConfigError("anchors in '" + manifest_path.string() + "' were trained on a different dataset");
  }
  LoadedAnchors out;
  bool first = true;
  for (const auto& entry : manifest.at("anchors")) {
    const Checkpoint ck = load_existing(manifest_path.parent_path() / entry.at("checkpoint").get<std::string>());
    if (!(ck.spec == expected_spec)) throw ConfigError("anchor network does not match the configured network");
    if (ck.curve.points.size() != 1) throw ConfigError("anchor checkpoint holds more than one point");
    if (first) {
      out.base = ck.base;
      out.spec = ck.spec;
      first = false;
    } else if (!same_base(ck.base, out.base)) {
      throw ConfigError("anchors do not share the same base weights");
    }
    out.points.push_back(ck.curve.points.front());
    out.seeds.push_back(entry.at("seed").get<std::uint64_t>());
  }
  return out;
}

fs::path manifest_location(const ExperimentConfig& config) {
  if (config.anchors) return *config.anchors;
  return fs::path(config.output_dir) / "anchors" / "manifest.json";
}

/// The configured network must match what the checkpoint was built with.
LoraModel model_for(const ExperimentConfig& config, const Checkpoint& ck, const Dataset& data) {
  const NetworkSpec expected = make_network_spec(config.network, data);
  if (!(expected == ck.spec)) throw ConfigError("checkpoint network does not match the configured network and dataset");
  return LoraModel(ck.spec, ck.base);
}

Method checkpoint_method(const Checkpoint& ck) {
  const Method m = Method::parse(ck.method);
  if (!(m.curve_config() == ck.curve.config)) throw ConfigError("checkpoint method does not match its curve shape");
  return m;
}

json metrics_json(const MetricsReport& m, const std::string& method, const std::string& checkpoint) {
  return {{"checkpoint", checkpoint},
          {"method", method},
          {"split", "test"},
          {"num_examples", m.num_examples},
          {"accuracy", m.accuracy},
          {"log_likelihood", m.log_likelihood},
          {"ece", m.ece},
          {"mutual_information", m.mutual_information},
          {"temperature", temperature_to_json(m.temperature)},
          {"grid", m.grid},
          {"weights", m.weights}};
}

}  // namespace

CommandResult cmd_train_anchors(const ExperimentConfig& config) {
  if (config.seeds.empty()) throw ConfigError("train-anchors needs at least one seed");
  std::set<std::int64_t> unique;
  for (auto s : config.seeds) {
    if (s < 0) throw ConfigError("seeds must be non-negative");
    if (!unique.insert(s).second) throw ConfigError("duplicate seed " + std::to_string(s));
  }
  const fs::path dir = ensure_dir(fs::path(config.output_dir) / "anchors");
  const Dataset data = prepare_data(config.dataset, config.anchor_train.val_fraction);
  const LoraModel model = make_model(config.network, data);

  CommandResult result;
  json entries = json::array();
  for (auto s : config.seeds) {
    const auto seed = static_cast<std::uint64_t>(s);
    TrainReport report;
    Vector theta = pretrain_anchor(model, data, config.anchor_train, seed, &report);
    const std::string stem = "anchor_s" + std::to_string(seed);
    Checkpoint ck{model.spec(), model.base(), ControlPointSet::make_free(CurveConfig(1, 0), {std::move(theta)}), "MAP",
                  {{"role", "anchor"},
                   {"seed", seed},
                   {"dataset", dataset_json(config.dataset)},
                   {"base_seed", config.network.base_seed},
                   {"train", train_summary(report)}}};
    save_checkpoint(dir / (stem + ".lcrv"), ck);
    train_log_csv(report).save(dir / (stem + "_log.csv"));
    entries.push_back({{"seed", seed}, {"checkpoint", stem + ".lcrv"}});
    result.files.insert(result.files.end(), {dir / (stem + ".lcrv"), dir / (stem + ".json"), dir / (stem + "_log.csv")});
  }
  const json manifest{{"format", kManifestFormat},
                      {"version", 1},
                      {"dataset", dataset_json(config.dataset)},
                      {"base_seed", config.network.base_seed},
                      {"network", to_json(model.spec())},
                      {"anchors", entries}};
  write_json(dir / "manifest.json", manifest);
  result.files.push_back(dir / "manifest.json");
  return result;
}

CommandResult cmd_train_curve(const ExperimentConfig& config) {
  const Method method = config.parsed_method();
  const std::uint64_t seed = single_seed(config, "train-curve");
  const fs::path dir = ensure_dir(config.output_dir);
  const Dataset data = prepare_data(config.dataset, config.curve_train.val_fraction);

  std::optional<LoraModel> model;
  LoadedAnchors anchors;
  if (method.needs_anchors()) {
    anchors = load_anchors(manifest_location(config), make_network_spec(config.network, data), config.dataset);
    if (anchors.points.size() != static_cast<std::size_t>(method.num_anchors)) {
      throw ConfigError(method.str() + " needs " + std::to_string(method.num_anchors) + " anchors but the manifest lists " +
                        std::to_string(anchors.points.size()));
    }
    model.emplace(anchors.spec, anchors.base);
  } else {
    model.emplace(make_model(config.network, data));
  }

  TrainReport report;
  ControlPointSet curve = build_curve(method, *model, data, anchors.points, config.anchor_train, config.curve_train,
                                      seed, &report);
  const std::string stem = "curve_" + method.slug();
  json meta{{"role", "curve"},
            {"seed", seed},
            {"dataset", dataset_json(config.dataset)},
            {"anchor_seeds", anchors.seeds},
            {"trained", method.trains() || method.kind == MethodKind::MAP},
            {"train", train_summary(report)}};
  if (!method.needs_anchors()) meta["base_seed"] = config.network.base_seed;
  save_checkpoint(dir / (stem + ".lcrv"), Checkpoint{model->spec(), model->base(), curve, method.str(), meta});
  train_log_csv(report).save(dir / (stem + "_log.csv"));
  return {{dir / (stem + ".lcrv"), dir / (stem + ".json"), dir / (stem + "_log.csv")}, 0};
}

CommandResult cmd_evaluate(const ExperimentConfig& config, const fs::path& checkpoint) {
  const Checkpoint ck = load_existing(checkpoint);
  const Method method = checkpoint_method(ck);
  const fs::path dir = ensure_dir(config.output_dir);
  const Dataset data = prepare_data(config.dataset, config.curve_train.val_fraction);
  const LoraModel model = model_for(config, ck, data);
  const MetricsReport metrics = evaluate(model, ck.curve, data, eval_options(method, config.inference));
  const std::string stem = checkpoint.stem().string();
  const fs::path path = dir / ("metrics_" + stem + ".json");
  write_json(path, metrics_json(metrics, method.str(), checkpoint.filename().string()));
  return {{path}, 0};
}

CommandResult cmd_profile(const ExperimentConfig& config, const fs::path& checkpoint) {
  const Checkpoint ck = load_existing(checkpoint);
  const Method method = checkpoint_method(ck);
  const fs::path dir = ensure_dir(config.output_dir);
  const Dataset data = prepare_data(config.dataset, config.curve_train.val_fraction);
  const LoraModel model = model_for(config, ck, data);
  const std::string stem = checkpoint.stem().string();

  const LossProfile prof = profile(model, ck.curve, data.train, config.profile.points_per_segment);
  const BarrierReport bar = barrier(prof, anchor_grid(ck.curve.config));
  const LipschitzReport lip = lipschitz_check(prof);
  json segments = json::array();
  for (const auto& s : bar.segments) {
    segments.push_back({{"segment", s.segment},
                        {"max_loss", s.max_loss},
                        {"t_at_max", s.t_at_max},
                        {"endpoint_max", s.endpoint_max},
                        {"barrier", s.barrier}});
  }
  const json barrier_doc{{"checkpoint", checkpoint.filename().string()},
                         {"method", method.str()},
                         {"split", "train"},
                         {"points_per_segment", config.profile.points_per_segment},
                         {"barrier", bar.barrier},
                         {"path_max", bar.path_max},
                         {"anchor_max", bar.anchor_max},
                         {"t_at_max", bar.t_at_max},
                         {"segments", segments},
                         {"lipschitz",
                          {{"pairs_checked", lip.pairs_checked},
                           {"violations", lip.violations},
                           {"worst_slack", lip.worst_slack},
                           {"worst_s", lip.worst_s},
                           {"worst_t", lip.worst_t}}}};

  const auto n_examples = std::min<Eigen::Index>(config.profile.evolution_examples, data.test.size());
  const Matrix examples = data.test.x.topRows(n_examples);
  const auto grid = make_eval_grid(ck.curve.config, config.inference.grid_points);
  const ProbabilityEvolution evo = probability_evolution(model, ck.curve, examples, grid);

  CommandResult result;
  result.files = {dir / ("profile_" + stem + ".csv"), dir / ("barrier_" + stem + ".json"),
                  dir / ("evolution_" + stem + ".csv")};
  profile_csv(prof).save(result.files[0]);
  write_json(result.files[1], barrier_doc);
  evolution_csv(evo).save(result.files[2]);
  return result;
}

CommandResult cmd_sweep(const ExperimentConfig& config) {
  if (config.seeds.size() < 2) throw ConfigError("sweep needs at least two seeds");
  std::vector<Method> methods;
  for (const auto& m : config.sweep.methods) methods.push_back(Method::parse(m));
  if (methods.empty()) throw ConfigError("sweep needs at least one method");
  const fs::path dir = ensure_dir(config.output_dir);

  const auto runs = run_sweep(config, methods, config.seeds, config.sweep.workers);

  CommandResult result;
  CsvWriter per_run({"method", "seed", "status", "accuracy", "log_likelihood", "ece", "mutual_information", "error"});
  for (std::size_t k = 0; k < methods.size(); ++k) {
    for (const auto& run : runs) {
      const auto& mr = run.methods.at(k);
      if (!mr.ok) ++result.failures;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      per_run.row({mr.method.str(), CsvWriter::cell(static_cast<long long>(run.seed)), mr.ok ? "ok" : "failed",
                   CsvWriter::cell(mr.ok ? mr.metrics.accuracy : nan),
                   CsvWriter::cell(mr.ok ? mr.metrics.log_likelihood : nan), CsvWriter::cell(mr.ok ? mr.metrics.ece : nan),
                   CsvWriter::cell(mr.ok ? mr.metrics.mutual_information : nan), mr.error});
    }
  }
  CsvWriter summary({"method", "runs", "failed", "acc_mean", "acc_std", "ll_mean", "ll_std", "ece_mean", "ece_std",
                     "mi_mean", "mi_std"});
  for (const auto& r : summarize(methods, runs)) {
    summary.row({r.method, CsvWriter::cell(static_cast<long long>(r.runs)),
                 CsvWriter::cell(static_cast<long long>(r.failed)), CsvWriter::cell(r.acc_mean),
                 CsvWriter::cell(r.acc_std), CsvWriter::cell(r.ll_mean), CsvWriter::cell(r.ll_std),
                 CsvWriter::cell(r.ece_mean), CsvWriter::cell(r.ece_std), CsvWriter::cell(r.mi_mean),
                 CsvWriter::cell(r.mi_std)});
  }
  result.files = {dir / "sweep_runs.csv", dir / "sweep_summary.csv"};
  per_run.save(result.files[0]);
  summary.save(result.files[1]);
  return result;
}

namespace {

struct Flags {
  std::string config;
  std::string method;
  std::string seeds;
  int grid_m = 0;
  std::string temperature;
  bool paper_scale = false;
  std::string out;
  std::string checkpoint;
  std::string anchors;
  int workers = 0;
  int points_per_segment = 0;
};

void keep_step_budget(TrainConfig& target, const TrainConfig& preset) {
  target.total_steps = preset.total_steps;
  target.batch_size = preset.batch_size;
  target.peak_lr = preset.peak_lr;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env) {
  CLI::App app{"Low-rank adapter curve experiments"};
  app.name(args.empty() ? "lcurve" : args.front());
  app.require_subcommand(1);
  Flags f;
  std::map<std::string, CLI::Option*> given;

  auto add_common = [&](CLI::App* sub, bool wants_checkpoint) {
    given[sub->get_name() + "config"] = sub->add_option("--config", f.config, "Experiment config JSON");
    given[sub->get_name() + "method"] =
        sub->add_option("--method", f.method, "MAP | DE(N) | Lin(N) | ALC(N,m) | FLC(N,m)");
    given[sub->get_name() + "seed"] = sub->add_option("--seed", f.seeds, "Seed or comma-separated seed list");
    given[sub->get_name() + "grid"] = sub->add_option("--grid-M", f.grid_m, "Evaluation grid size")->check(CLI::PositiveNumber);
    given[sub->get_name() + "temperature"] = sub->add_option("--temperature", f.temperature, "inf or a positive number");
    given[sub->get_name() + "paper"] = sub->add_flag("--paper-scale", f.paper_scale, "Full-size step counts and learning rate");
    given[sub->get_name() + "out"] = sub->add_option("--out", f.out, "Output directory");
    given[sub->get_name() + "anchors"] = sub->add_option("--anchors", f.anchors, "Anchor manifest JSON");
    given[sub->get_name() + "workers"] = sub->add_option("--workers", f.workers, "Sweep worker threads")->check(CLI::PositiveNumber);
    given[sub->get_name() + "pps"] =
        sub->add_option("--points-per-segment", f.points_per_segment, "Profile grid density")->check(CLI::Range(2, 1000000));
    if (wants_checkpoint) {
      given[sub->get_name() + "checkpoint"] = sub->add_option("--checkpoint", f.checkpoint, "Checkpoint (.lcrv)")->required();
    }
  };
  auto* anchors_cmd = app.add_subcommand("train-anchors", "Fine-tune one adapter per seed");
  auto* curve_cmd = app.add_subcommand("train-curve", "Train a curve for --method");
  auto* eval_cmd = app.add_subcommand("evaluate", "Test-split metrics of a checkpoint");
  auto* profile_cmd = app.add_subcommand("profile", "Loss profile, barrier and probability evolution");
  auto* sweep_cmd = app.add_subcommand("sweep", "Multi-seed comparison of the configured methods");
  for (auto* sub : {anchors_cmd, curve_cmd, sweep_cmd}) add_common(sub, false);
  for (auto* sub : {eval_cmd, profile_cmd}) add_common(sub, true);

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  CLI::App* sub = app.get_subcommands().front();
  auto has = [&](const std::string& key) {
    const auto it = given.find(sub->get_name() + key);
    return it != given.end() && it->second->count() > 0;
  };

  try {
    std::optional<fs::path> config_path;
    if (has("config")) config_path = f.config;
    ExperimentConfig config = load_experiment_config(config_path, env);
    if (has("method")) {
      config.method = f.method;
      config.sweep.methods = {f.method};
    }
    if (has("seed")) config.seeds = parse_seed_list(f.seeds);
    if (has("grid")) config.inference.grid_points = f.grid_m;
    if (has("temperature")) config.inference.temperature = parse_temperature(f.temperature);
    if (f.paper_scale) {
      keep_step_budget(config.anchor_train, TrainConfig::paper_anchor());
      keep_step_budget(config.curve_train, TrainConfig::paper_curve());
    }
    if (has("out")) config.output_dir = f.out;
    if (has("anchors")) config.anchors = f.anchors;
    if (has("workers")) config.sweep.workers = f.workers;
    if (has("pps")) config.profile.points_per_segment = f.points_per_segment;
    config.validate();

    CommandResult result;
    const std::string name = sub->get_name();
    if (name == "train-anchors") result = cmd_train_anchors(config);
    else if (name == "train-curve") result = cmd_train_curve(config);
    else if (name == "evaluate") result = cmd_evaluate(config, f.checkpoint);
    else if (name == "profile") result = cmd_profile(config, f.checkpoint);
    else result = cmd_sweep(config);

    for (const auto& p : result.files) out << p.string() << "\n";
    if (result.failures > 0) {
      err << "error: " << result.failures << " sweep run(s) failed; see sweep_runs.csv\n";
      return kExitFailure;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace lcurve::cli
