// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcurve/bma.hpp"
#include "lcurve/data.hpp"
#include "lcurve/network.hpp"
#include "lcurve/trainer.hpp"

namespace lcurve::cli {

/// Bad flags, malformed config or inconsistent inputs. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MethodKind { MAP, DE, Lin, ALC, FLC };

/// A parsed method string: MAP | DE(N) | Lin(N) | ALC(N,m) | FLC(N,m).
struct Method {
  MethodKind kind = MethodKind::MAP;
  int num_anchors = 1;
  int handles = 0;

  /// Throws ConfigError on anything outside the grammar, N < 1 or m < 0.
  static Method parse(const std::string& text);
  std::string str() const;
  /// File-name friendly form, e.g. "ALC_2_1".
  std::string slug() const;
  CurveConfig curve_config() const;
  bool needs_anchors() const noexcept;
  bool trains() const noexcept;

  friend bool operator==(const Method&, const Method&) = default;
};

struct DatasetConfig {
  std::string name = "xor_rings";  // gaussian_blobs | xor_rings | parity
  int n = 1000;
  int test_n = 1000;
  int dim = 2;
  int num_classes = 2;
  double separation = 3.0;
  double noise = 0.0;
  int seq_len = 6;
  int vocab = 4;
  std::uint64_t seed = 1;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct NetworkConfig {
  std::vector<int> hidden{32, 32};
  int rank = 8;
  double alpha = 16.0;
  /// Embedding width of the attention front end, used by token datasets only.
  int model_dim = 16;
  std::uint64_t base_seed = 1;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct InferenceConfig {
  std::optional<int> grid_points;
  double temperature = kInfiniteTemperature;

  friend bool operator==(const InferenceConfig&, const InferenceConfig&) = default;
};

struct ProfileConfig {
  int points_per_segment = 101;
  int evolution_examples = 8;

  friend bool operator==(const ProfileConfig&, const ProfileConfig&) = default;
};

struct SweepConfig {
  std::vector<std::string> methods{"DE(2)", "Lin(2)", "ALC(2,1)"};
  int workers = 1;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  NetworkConfig network;
  std::string method = "ALC(2,1)";
  TrainConfig anchor_train = TrainConfig::desk_anchor();
  TrainConfig curve_train = TrainConfig::desk_curve();
  InferenceConfig inference;
  ProfileConfig profile;
  SweepConfig sweep;
  std::string output_dir = "out";
  std::vector<std::int64_t> seeds{1};
  /// Anchor manifest for ALC, Lin and DE; defaults to <output_dir>/anchors/manifest.json.
  std::optional<std::string> anchors;

  /// Method grammar, dataset name and the nested train configs.
  void validate() const;
  Method parsed_method() const { return Method::parse(method); }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown top-level sections are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Applies SECTION__KEY=value overrides to a config document, e.g.
/// CURVE_TRAIN__PEAK_LR=0.001. Only variables whose lower-cased SECTION is
/// an object section of the config are considered. Values are parsed as
/// JSON and fall back to plain strings. Top-level scalars such as the
/// method are set with flags.
void apply_env_overrides(nlohmann::json& document, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> environment_snapshot();

/// Reads a config file (or the defaults when `path` is empty) and applies
/// environment overrides.
ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& path,
                                        const std::map<std::string, std::string>& env);

/// "1,2,3" -> {1, 2, 3}. Throws ConfigError on empty items or junk.
std::vector<std::int64_t> parse_seed_list(const std::string& text);
/// "inf" / "infinity" or a positive number.
double parse_temperature(const std::string& text);

Dataset make_dataset(const DatasetConfig& config);
NetworkSpec make_network_spec(const NetworkConfig& network, const Dataset& data);

}  // namespace lcurve::cli
