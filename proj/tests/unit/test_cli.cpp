// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <unistd.h>

#include "lcurve/checkpoint.hpp"
#include "lcurve_cli/commands.hpp"
#include "lcurve_cli/config.hpp"

using namespace lcurve;
using namespace lcurve::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("lcurve_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A small, fast experiment: 200 xor_rings points and 100 training steps.
fs::path write_small_config(const TempDir& dir) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << R"j({
    "dataset": {"name": "xor_rings", "n": 200, "test_n": 100},
    "network": {"hidden": [8], "rank": 2},
    "anchor_train": {"total_steps": 100},
    "curve_train": {"total_steps": 100},
    "profile": {"points_per_segment": 11, "evolution_examples": 3},
    "sweep": {"methods": ["Lin(3)", "ALC(3,0)", "DE(3)"]}
  })j";
  return p;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args, const std::map<std::string, std::string>& env = {}) {
  args.insert(args.begin(), "lcurve");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, env);
  return {code, out.str(), err.str()};
}

/// Splits one CSV record, honouring quoted cells.
std::vector<std::string> csv_cells(const std::string& line) {
  std::vector<std::string> cells{""};
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

std::vector<std::string> csv_lines(const fs::path& p) {
  std::vector<std::string> lines;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST(MethodGrammar, ParsesEveryForm) {
  EXPECT_EQ(Method::parse("MAP"), (Method{MethodKind::MAP, 1, 0}));
  EXPECT_EQ(Method::parse("DE(3)"), (Method{MethodKind::DE, 3, 0}));
  EXPECT_EQ(Method::parse("Lin(4)"), (Method{MethodKind::Lin, 4, 0}));
  EXPECT_EQ(Method::parse("ALC(2,1)"), (Method{MethodKind::ALC, 2, 1}));
  EXPECT_EQ(Method::parse(" FLC( 3 , 2 ) "), (Method{MethodKind::FLC, 3, 2}));
  for (const char* s : {"MAP", "DE(3)", "Lin(4)", "ALC(2,1)", "FLC(3,0)"}) EXPECT_EQ(Method::parse(s).str(), s);
  EXPECT_EQ(Method::parse("ALC(2,1)").slug(), "ALC_2_1");
  EXPECT_EQ(Method::parse("FLC(3,2)").curve_config().num_control_points(), 7);
}

TEST(MethodGrammar, RejectsInvalid) {
  for (const char* s : {"", "map", "DE", "DE()", "DE(0)", "Lin(-1)", "ALC(2)", "ALC(0,1)", "FLC(2,-1)", "FLC(2,1,3)",
                        "ALC(2,1)x", "SWAG(2)", "DE(1.5)"}) {
    EXPECT_THROW(Method::parse(s), ConfigError) << s;
  }
}

TEST(MethodGrammar, TrainingNeeds) {
  EXPECT_FALSE(Method::parse("Lin(3)").trains());
  EXPECT_FALSE(Method::parse("DE(3)").trains());
  EXPECT_FALSE(Method::parse("ALC(3,0)").trains());
  EXPECT_TRUE(Method::parse("ALC(3,1)").trains());
  EXPECT_TRUE(Method::parse("FLC(2,0)").trains());
  EXPECT_TRUE(Method::parse("ALC(2,0)").needs_anchors());
  EXPECT_FALSE(Method::parse("FLC(2,1)").needs_anchors());
}

TEST(ExperimentConfig, RoundTripsThroughJson) {
  ExperimentConfig c;
  EXPECT_EQ(experiment_config_from_json(to_json(c)), c);
  c.dataset = {"gaussian_blobs", 300, 50, 4, 3, 2.5, 0.1, 5, 3, 17};
  c.network = {{12, 7}, 3, 8.0, 10, 99};
  c.method = "FLC(3,2)";
  c.anchor_train.peak_lr = 3.3e-3;
  c.curve_train.jsd_penalty = JsdPenalty::Cap;
  c.curve_train.val_grid_points = 7;
  c.curve_train.rho_warmup = true;
  c.inference = {9, 0.7};
  c.profile = {33, 2};
  c.sweep = {{"MAP", "DE(4)"}, 3};
  c.output_dir = "elsewhere";
  c.seeds = {4, 5, 6};
  c.anchors = "a/manifest.json";
  const auto back = experiment_config_from_json(to_json(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  c.inference.temperature = kInfiniteTemperature;
  EXPECT_EQ(experiment_config_from_json(to_json(c)), c);
}

TEST(ExperimentConfig, RejectsBadDocuments) {
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"j({"bogus": 1})j")), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"j({"method": "ALC(0,1)"})j")), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"j({"dataset": {"name": "mnist"}})j")), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"j({"curve_train": {"batch_size": 0}})j")),
               ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"j({"seeds": "x"})j")), ConfigError);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse("[]")), ConfigError);
}

TEST(ExperimentConfig, EnvironmentOverrides) {
  nlohmann::json doc = nlohmann::json::parse(R"j({"curve_train": {"peak_lr": 0.5}})j");
  apply_env_overrides(doc, {{"CURVE_TRAIN__PEAK_LR", "0.001"},
                            {"DATASET__NAME", "gaussian_blobs"},
                            {"INFERENCE__TEMPERATURE", "inf"},
                            {"NETWORK__HIDDEN", "[4, 4]"},
                            {"HOME", "/root"},
                            {"UNRELATED__KEY", "1"},
                            {"METHOD__X", "1"}});
  const auto c = experiment_config_from_json(doc);
  EXPECT_EQ(c.curve_train.peak_lr, 0.001);
  EXPECT_EQ(c.dataset.name, "gaussian_blobs");
  EXPECT_EQ(c.inference.temperature, kInfiniteTemperature);
  EXPECT_EQ(c.network.hidden, (std::vector<int>{4, 4}));
  EXPECT_EQ(c.method, ExperimentConfig{}.method);
}

TEST(Flags, SeedListAndTemperature) {
  EXPECT_EQ(parse_seed_list("7"), (std::vector<std::int64_t>{7}));
  EXPECT_EQ(parse_seed_list("1,2,3"), (std::vector<std::int64_t>{1, 2, 3}));
  EXPECT_EQ(parse_seed_list("-4"), (std::vector<std::int64_t>{-4}));
  for (const char* s : {"", "1,", ",1", "1,,2", "a", "1.5", "1 2"}) EXPECT_THROW(parse_seed_list(s), ConfigError) << s;
  EXPECT_EQ(parse_temperature("inf"), kInfiniteTemperature);
  EXPECT_EQ(parse_temperature("infinity"), kInfiniteTemperature);
  EXPECT_EQ(parse_temperature("0.5"), 0.5);
  for (const char* s : {"0", "-1", "hot", "1x", ""}) EXPECT_THROW(parse_temperature(s), ConfigError) << s;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({"train-curve", "--method", "FLC(2,-1)"}).code, kExitUsage);
  EXPECT_EQ(invoke({"evaluate"}).code, kExitUsage);  // --checkpoint is required
  EXPECT_EQ(invoke({"train-anchors", "--config", "/nonexistent/config.json"}).code, kExitUsage);
  EXPECT_EQ(invoke({"train-anchors", "--seed", ""}).code, kExitUsage);
  EXPECT_EQ(invoke({"sweep", "--seed", "1"}).code, kExitUsage);
  EXPECT_EQ(invoke({"train-anchors", "--temperature", "cold"}).code, kExitUsage);
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
}

TEST(Cli, TrainAnchorsIsDeterministic) {
  TempDir dir("anchors");
  const auto cfg = write_small_config(dir).string();
  const auto a = invoke({"train-anchors", "--config", cfg, "--seed", "1,2,3", "--out", (dir / "a").string()});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  const auto b = invoke({"train-anchors", "--config", cfg, "--seed", "1,2,3", "--out", (dir / "b").string()});
  ASSERT_EQ(b.code, kExitOk) << b.err;
  for (const char* f : {"anchor_s1.lcrv", "anchor_s2.lcrv", "anchor_s3.lcrv", "anchor_s1.json", "anchor_s3_log.csv",
                        "manifest.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / "anchors" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / "anchors" / f), slurp(dir / "b" / "anchors" / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "anchors" / "manifest.json"));
  EXPECT_EQ(manifest.at("anchors").size(), 3u);
  EXPECT_NE(slurp(dir / "a" / "anchors" / "anchor_s1.lcrv"), slurp(dir / "a" / "anchors" / "anchor_s2.lcrv"));

  std::ofstream(dir / "empty.json") << R"j({"seeds": []})j";
  EXPECT_EQ(invoke({"train-anchors", "--config", (dir / "empty.json").string(), "--out", (dir / "c").string()}).code,
            kExitUsage);
  EXPECT_EQ(invoke({"train-anchors", "--config", cfg, "--seed", "1,1", "--out", (dir / "c").string()}).code, kExitUsage);
}

TEST(Cli, UnwritableOutputDirectory) {
  TempDir dir("unwritable");
  const auto cfg = write_small_config(dir).string();
  std::ofstream(dir / "file") << "x";
  const auto r = invoke({"train-anchors", "--config", cfg, "--seed", "1", "--out", (dir / "file" / "sub").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("output directory"), std::string::npos);
}

TEST(Cli, CurveShapesAndAnchorHandling) {
  TempDir dir("curves");
  const auto cfg = write_small_config(dir).string();
  const auto out = dir.path().string();
  ASSERT_EQ(invoke({"train-anchors", "--config", cfg, "--seed", "1,2", "--out", out}).code, kExitOk);

  ASSERT_EQ(invoke({"train-curve", "--config", cfg, "--method", "FLC(3,2)", "--seed", "4", "--out", out}).code, kExitOk);
  const auto flc = load_checkpoint(dir / "curve_FLC_3_2.lcrv");
  EXPECT_EQ(flc.curve.points.size(), 7u);
  EXPECT_EQ(flc.method, "FLC(3,2)");

  ASSERT_EQ(invoke({"train-curve", "--config", cfg, "--method", "ALC(2,1)", "--seed", "4", "--out", out}).code, kExitOk);
  const auto alc = load_checkpoint(dir / "curve_ALC_2_1.lcrv");
  EXPECT_EQ(alc.curve.frozen, (std::vector<bool>{true, false, true}));
  const auto a1 = load_checkpoint(dir / "anchors" / "anchor_s1.lcrv");
  const auto a2 = load_checkpoint(dir / "anchors" / "anchor_s2.lcrv");
  EXPECT_EQ(alc.curve.points[0], a1.curve.points[0]);
  EXPECT_EQ(alc.curve.points[2], a2.curve.points[0]);

  ASSERT_EQ(invoke({"train-curve", "--config", cfg, "--method", "Lin(2)", "--seed", "4", "--out", out}).code, kExitOk);
  const auto lin = load_checkpoint(dir / "curve_Lin_2.lcrv");
  EXPECT_EQ(lin.curve.points.size(), 2u);
  EXPECT_EQ(lin.curve.points[0], a1.curve.points[0]);
  EXPECT_EQ(lin.curve.points[1], a2.curve.points[0]);
  EXPECT_EQ(csv_lines(dir / "curve_Lin_2_log.csv"), (std::vector<std::string>{"step,lr,train_loss,jsd,val_ll"}));
  EXPECT_FALSE(lin.metadata.at("trained").get<bool>());

  const auto mismatch = invoke({"train-curve", "--config", cfg, "--method", "ALC(3,1)", "--seed", "4", "--out", out});
  EXPECT_EQ(mismatch.code, kExitUsage);
  EXPECT_NE(mismatch.err.find("anchors"), std::string::npos);
  EXPECT_EQ(invoke({"train-curve", "--config", cfg, "--method", "Lin(2)", "--seed", "4", "--out", out, "--anchors",
                 (dir / "none.json").string()})
                .code,
            kExitUsage);
  EXPECT_EQ(invoke({"train-curve", "--config", cfg, "--method", "FLC(2,1)", "--seed", "1,2", "--out", out}).code,
            kExitUsage);
}

TEST(Cli, EvaluateReports) {
  TempDir dir("evaluate");
  const auto cfg = write_small_config(dir).string();
  const auto out = dir.path().string();
  ASSERT_EQ(invoke({"train-curve", "--config", cfg, "--method", "MAP", "--seed", "3", "--out", out}).code, kExitOk);
  ASSERT_EQ(invoke({"evaluate", "--config", cfg, "--checkpoint", (dir / "curve_MAP.lcrv").string(), "--out", out}).code,
            kExitOk);
  const auto map = nlohmann::json::parse(slurp(dir / "metrics_curve_MAP.json"));
  EXPECT_EQ(map.at("mutual_information").get<double>(), 0.0);
  EXPECT_EQ(map.at("num_examples").get<int>(), 100);

  ASSERT_EQ(invoke({"train-curve", "--config", cfg, "--method", "FLC(2,1)", "--seed", "3", "--out", out}).code, kExitOk);
  const auto ck = (dir / "curve_FLC_2_1.lcrv").string();
  ASSERT_EQ(invoke({"evaluate", "--config", cfg, "--checkpoint", ck, "--out", out, "--temperature", "inf", "--grid-M", "4"})
                .code,
            kExitOk);
  const auto flc = nlohmann::json::parse(slurp(dir / "metrics_curve_FLC_2_1.json"));
  EXPECT_EQ(flc.at("temperature"), "inf");
  ASSERT_EQ(flc.at("weights").size(), 4u);
  for (const auto& w : flc.at("weights")) EXPECT_EQ(w.get<double>(), 0.25);
  EXPECT_GE(flc.at("mutual_information").get<double>(), 0.0);

  ASSERT_EQ(invoke({"evaluate", "--config", cfg, "--checkpoint", ck, "--out", out, "--temperature", "1"}).code, kExitOk);
  const auto finite = nlohmann::json::parse(slurp(dir / "metrics_curve_FLC_2_1.json"));
  EXPECT_EQ(finite.at("temperature").get<double>(), 1.0);

  EXPECT_EQ(invoke({"evaluate", "--config", cfg, "--checkpoint", (dir / "missing.lcrv").string(), "--out", out}).code,
            kExitUsage);
  const auto wrong = invoke({"evaluate", "--config", cfg, "--checkpoint", ck, "--out", out}, {{"NETWORK__HIDDEN", "[9]"}});
  EXPECT_EQ(wrong.code, kExitUsage);
  EXPECT_NE(wrong.err.find("does not match"), std::string::npos);
  std::ofstream(dir / "garbage.lcrv") << "not a checkpoint";
  std::ofstream(dir / "garbage.json") << "{}";
  EXPECT_EQ(invoke({"evaluate", "--config", cfg, "--checkpoint", (dir / "garbage.lcrv").string(), "--out", out}).code,
            kExitUsage);
}

TEST(Cli, ProfileOutputs) {
  TempDir dir("profile");
  const auto cfg = write_small_config(dir).string();
  const auto out = dir.path().string();
  ASSERT_EQ(invoke({"train-curve", "--config", cfg, "--method", "FLC(3,1)", "--seed", "2", "--out", out}).code, kExitOk);
  const auto ck = (dir / "curve_FLC_3_1.lcrv").string();
  ASSERT_EQ(invoke({"profile", "--config", cfg, "--checkpoint", ck, "--out", out}).code, kExitOk);
  const auto lines = csv_lines(dir / "profile_curve_FLC_3_1.csv");
  EXPECT_EQ(lines.front(), "t,loss,acc,grad_norm,speed");
  EXPECT_EQ(lines.size(), 1u + 21u);  // two segments of 11 points sharing the join
  const auto bar = nlohmann::json::parse(slurp(dir / "barrier_curve_FLC_3_1.json"));
  EXPECT_GE(bar.at("barrier").get<double>(), 0.0);
  EXPECT_EQ(bar.at("segments").size(), 2u);
  EXPECT_EQ(csv_lines(dir / "evolution_curve_FLC_3_1.csv").front(), "example_id,t,class,probability");
  // 3 examples x 9 grid points x 2 classes
  EXPECT_EQ(csv_lines(dir / "evolution_curve_FLC_3_1.csv").size(), 1u + 3u * 9u * 2u);

  ASSERT_EQ(invoke({"profile", "--config", cfg, "--checkpoint", ck, "--out", out, "--points-per-segment", "5"}).code,
            kExitOk);
  EXPECT_EQ(csv_lines(dir / "profile_curve_FLC_3_1.csv").size(), 1u + 9u);
}

TEST(Cli, SweepAggregatesAndReportsFailures) {
  TempDir dir("sweep");
  const auto cfg = write_small_config(dir).string();
  const auto out = dir.path().string();
  const auto r = invoke({"sweep", "--config", cfg, "--seed", "5,5", "--out", out, "--workers", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto summary = csv_lines(dir / "sweep_summary.csv");
  ASSERT_EQ(summary.size(), 4u);
  EXPECT_EQ(summary[0], "method,runs,failed,acc_mean,acc_std,ll_mean,ll_std,ece_mean,ece_std,mi_mean,mi_std");
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto cells = csv_cells(summary[i]);
    ASSERT_EQ(cells.size(), 11u);
    EXPECT_EQ(cells[1], "2");
    for (std::size_t k : {4u, 6u, 8u, 10u}) EXPECT_EQ(cells[k], "0") << summary[i];
  }
  // Lin(3) and ALC(3,0) are the same piecewise-linear curve.
  auto lin = csv_cells(summary[1]);
  auto alc = csv_cells(summary[2]);
  EXPECT_EQ(lin[0], "Lin(3)");
  EXPECT_EQ(alc[0], "ALC(3,0)");
  lin.erase(lin.begin());
  alc.erase(alc.begin());
  EXPECT_EQ(lin, alc);

  const auto failing = invoke({"sweep", "--config", cfg, "--seed", "5,-1", "--out", out});
  EXPECT_EQ(failing.code, kExitFailure);
  const auto runs = csv_lines(dir / "sweep_runs.csv");
  std::size_t failed_rows = 0;
  for (const auto& line : runs) {
    const auto cells = csv_cells(line);
    failed_rows += cells[1] == "-1" && cells[2] == "failed";
  }
  EXPECT_EQ(failed_rows, 3u);
}

TEST(Cli, PaperScaleUsesFullSizeLearningRate) {
  TempDir dir("paper");
  const auto cfg = write_small_config(dir).string();
  const auto out = dir.path().string();
  ASSERT_EQ(invoke({"train-curve", "--config", cfg, "--method", "MAP", "--seed", "1", "--out", out, "--paper-scale"}).code,
            kExitOk);
  const auto log = csv_lines(dir / "curve_MAP_log.csv");
  ASSERT_GT(log.size(), 2u);
  const double first_lr = std::stod(log[1].substr(log[1].find(',') + 1));
  const auto paper = TrainConfig::paper_anchor();
  EXPECT_NEAR(first_lr, paper.peak_lr / paper.div_factor, 1e-15);
  const auto ck = load_checkpoint(dir / "curve_MAP.lcrv");
  EXPECT_LE(ck.metadata.at("train").at("steps_run").get<std::size_t>(), static_cast<std::size_t>(paper.total_steps));
}
