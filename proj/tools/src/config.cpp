// SPDX-License-Identifier: Apache-2.0
#include "lcurve_cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include "lcurve/serialization.hpp"

extern char** environ;

namespace lcurve::cli {

using nlohmann::json;

namespace {

const std::set<std::string>& known_sections() {
  static const std::set<std::string> sections{"dataset", "network",   "method",     "anchor_train",
                                              "curve_train", "inference", "profile", "sweep",
                                              "output_dir",  "seeds",     "anchors"};
  return sections;
}

const std::set<std::string>& object_sections() {
  static const std::set<std::string> sections{"dataset",   "network", "anchor_train", "curve_train",
                                              "inference", "profile", "sweep"};
  return sections;
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

int parse_int(const std::string& s, const char* what) {
  int v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw ConfigError(std::string("bad ") + what + " '" + s + "'");
  return v;
}

}  // namespace

Method Method::parse(const std::string& text) {
  static const std::regex single(R"(^\s*(MAP)\s*$)");
  static const std::regex one_arg(R"(^\s*(DE|Lin)\s*\(\s*(-?\d+)\s*\)\s*$)");
  static const std::regex two_args(R"(^\s*(ALC|FLC)\s*\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s*$)");
  std::smatch m;
  Method out;
  if (std::regex_match(text, m, single)) return out;
  if (std::regex_match(text, m, one_arg)) {
    out.kind = m[1] == "DE" ? MethodKind::DE : MethodKind::Lin;
    out.num_anchors = parse_int(m[2], "anchor count");
    out.handles = 0;
  } else if (std::regex_match(text, m, two_args)) {
    out.kind = m[1] == "ALC" ? MethodKind::ALC : MethodKind::FLC;
    out.num_anchors = parse_int(m[2], "anchor count");
    out.handles = parse_int(m[3], "handle count");
  } else {
    throw ConfigError("method '" + text + "' is not one of MAP, DE(N), Lin(N), ALC(N,m), FLC(N,m)");
  }
  if (out.num_anchors < 1) throw ConfigError("method '" + text + "': N must be >= 1");
  if (out.handles < 0) throw ConfigError("method '" + text + "': m must be >= 0");
  return out;
}

std::string Method::str() const {
  switch (kind) {
    case MethodKind::MAP: return "MAP";
    case MethodKind::DE: return "DE(" + std::to_string(num_anchors) + ")";
    case MethodKind::Lin: return "Lin(" + std::to_string(num_anchors) + ")";
    case MethodKind::ALC: return "ALC(" + std::to_string(num_anchors) + "," + std::to_string(handles) + ")";
    case MethodKind::FLC: return "FLC(" + std::to_string(num_anchors) + "," + std::to_string(handles) + ")";
  }
  return "?";
}

std::string Method::slug() const {
  std::string s;
  for (char c : str()) {
    if (std::isalnum(static_cast<unsigned char>(c))) s += c;
    else if (c == '(' || c == ',') s += '_';
  }
  return s;
}

CurveConfig Method::curve_config() const { return CurveConfig(num_anchors, handles); }

bool Method::needs_anchors() const noexcept {
  return kind == MethodKind::DE || kind == MethodKind::Lin || kind == MethodKind::ALC;
}

bool Method::trains() const noexcept {
  if (kind == MethodKind::DE || kind == MethodKind::Lin) return false;
  // ALC(N,0) has no free handles.
  return !(kind == MethodKind::ALC && handles == 0);
}

void ExperimentConfig::validate() const {
  (void)parsed_method();
  for (const auto& m : sweep.methods) (void)Method::parse(m);
  static const std::set<std::string> datasets{"gaussian_blobs", "xor_rings", "parity"};
  if (!datasets.contains(dataset.name)) throw ConfigError("unknown dataset '" + dataset.name + "'");
  if (dataset.n < 2 || dataset.test_n < 1) throw ConfigError("dataset sizes must be positive");
  if (network.rank < 1) throw ConfigError("network.rank must be >= 1");
  if (inference.grid_points && *inference.grid_points < 1) throw ConfigError("inference.grid_M must be >= 1");
  if (!(inference.temperature > 0.0)) throw ConfigError("inference.temperature must be > 0");
  if (profile.points_per_segment < 2) throw ConfigError("profile.points_per_segment must be >= 2");
  if (profile.evolution_examples < 0) throw ConfigError("profile.evolution_examples must be >= 0");
  if (sweep.workers < 1) throw ConfigError("sweep.workers must be >= 1");
  try {
    anchor_train.validate();
    curve_train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  const auto& d = c.dataset;
  j["dataset"] = {{"name", d.name},       {"n", d.n},         {"test_n", d.test_n},
                  {"dim", d.dim},         {"num_classes", d.num_classes}, {"separation", d.separation},
                  {"noise", d.noise},     {"seq_len", d.seq_len}, {"vocab", d.vocab},
                  {"seed", d.seed}};
  const auto& n = c.network;
  j["network"] = {{"hidden", n.hidden},
                  {"rank", n.rank},
                  {"alpha", n.alpha},
                  {"model_dim", n.model_dim},
                  {"base_seed", n.base_seed}};
  j["method"] = c.method;
  j["anchor_train"] = to_json(c.anchor_train);
  j["curve_train"] = to_json(c.curve_train);
  j["inference"] = {{"grid_M", c.inference.grid_points ? json(*c.inference.grid_points) : json(nullptr)},
                    {"temperature", temperature_to_json(c.inference.temperature)}};
  j["profile"] = {{"points_per_segment", c.profile.points_per_segment},
                  {"evolution_examples", c.profile.evolution_examples}};
  j["sweep"] = {{"methods", c.sweep.methods}, {"workers", c.sweep.workers}};
  j["output_dir"] = c.output_dir;
  j["seeds"] = c.seeds;
  j["anchors"] = c.anchors ? json(*c.anchors) : json(nullptr);
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_sections().contains(key)) throw ConfigError("unknown config section '" + key + "'");
  }
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      read_if(d, "name", c.dataset.name);
      read_if(d, "n", c.dataset.n);
      read_if(d, "test_n", c.dataset.test_n);
      read_if(d, "dim", c.dataset.dim);
      read_if(d, "num_classes", c.dataset.num_classes);
      read_if(d, "separation", c.dataset.separation);
      read_if(d, "noise", c.dataset.noise);
      read_if(d, "seq_len", c.dataset.seq_len);
      read_if(d, "vocab", c.dataset.vocab);
      read_if(d, "seed", c.dataset.seed);
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      read_if(n, "hidden", c.network.hidden);
      read_if(n, "rank", c.network.rank);
      read_if(n, "alpha", c.network.alpha);
      read_if(n, "model_dim", c.network.model_dim);
      read_if(n, "base_seed", c.network.base_seed);
    }
    read_if(j, "method", c.method);
    if (j.contains("anchor_train")) c.anchor_train = train_config_from_json(j.at("anchor_train"), c.anchor_train);
    if (j.contains("curve_train")) c.curve_train = train_config_from_json(j.at("curve_train"), c.curve_train);
    if (j.contains("inference")) {
      const auto& i = j.at("inference");
      if (i.contains("grid_M")) {
        c.inference.grid_points = i.at("grid_M").is_null() ? std::nullopt : std::optional<int>(i.at("grid_M").get<int>());
      }
      if (i.contains("temperature")) c.inference.temperature = temperature_from_json(i.at("temperature"));
    }
    if (j.contains("profile")) {
      read_if(j.at("profile"), "points_per_segment", c.profile.points_per_segment);
      read_if(j.at("profile"), "evolution_examples", c.profile.evolution_examples);
    }
    if (j.contains("sweep")) {
      read_if(j.at("sweep"), "methods", c.sweep.methods);
      read_if(j.at("sweep"), "workers", c.sweep.workers);
    }
    read_if(j, "output_dir", c.output_dir);
    read_if(j, "seeds", c.seeds);
    if (j.contains("anchors")) {
      c.anchors = j.at("anchors").is_null() ? std::nullopt : std::optional<std::string>(j.at("anchors").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_env_overrides(json& document, const std::map<std::string, std::string>& env) {
  for (const auto& [name, value] : env) {
    const auto sep = name.find("__");
    if (sep == std::string::npos || sep == 0 || sep + 2 >= name.size()) continue;
    std::string section = name.substr(0, sep);
    std::string key = name.substr(sep + 2);
    std::transform(section.begin(), section.end(), section.begin(), [](unsigned char c) { return std::tolower(c); });
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!object_sections().contains(section)) continue;
    json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) parsed = value;
    if (!document.contains(section) || !document[section].is_object()) document[section] = json::object();
    document[section][key] = parsed;
  }
}

std::map<std::string, std::string> environment_snapshot() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq != std::string::npos) env.emplace(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return env;
}

ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& path,
                                        const std::map<std::string, std::string>& env) {
  json document = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config '" + path->string() + "'");
    try {
      document = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config '" + path->string() + "': " + e.what());
    }
  }
  apply_env_overrides(document, env);
  return experiment_config_from_json(document);
}

std::vector<std::int64_t> parse_seed_list(const std::string& text) {
  std::vector<std::int64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string::npos ? text.size() : comma;
    const std::string item = text.substr(start, end - start);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError("bad seed list '" + text + "'");
    }
    seeds.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return seeds;
}

double parse_temperature(const std::string& text) {
  double t = 0.0;
  try {
    t = temperature_from_json(json(text));
  } catch (const std::exception&) {
    throw ConfigError("bad temperature '" + text + "'");
  }
  if (!(t > 0.0)) throw ConfigError("temperature must be > 0");
  return t;
}

Dataset make_dataset(const DatasetConfig& d) {
  if (d.name == "gaussian_blobs") return gaussian_blobs(d.n, d.dim, d.num_classes, d.separation, d.seed, d.test_n);
  if (d.name == "xor_rings") return xor_rings(d.n, d.noise, d.seed, d.test_n);
  if (d.name == "parity") return parity_sequences(d.n, d.seq_len, d.vocab, d.seed, d.test_n);
  throw ConfigError("unknown dataset '" + d.name + "'");
}

NetworkSpec make_network_spec(const NetworkConfig& network, const Dataset& data) {
  try {
    if (data.vocab_size > 0) {
      return NetworkSpec::attention_classifier(data.vocab_size, static_cast<int>(data.train.x.cols()),
                                               network.model_dim, network.hidden, data.num_classes, network.rank,
                                               network.alpha);
    }
    return NetworkSpec::mlp(static_cast<int>(data.train.x.cols()), network.hidden, data.num_classes, network.rank,
                            network.alpha);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
}

}  // namespace lcurve::cli
