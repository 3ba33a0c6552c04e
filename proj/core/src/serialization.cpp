// SPDX-License-Identifier: Apache-2.0
#include "lcurve/serialization.hpp"

#include <cmath>
#include <stdexcept>

namespace lcurve {

using nlohmann::json;

namespace {

std::string activation_name(Activation a) { return a == Activation::SiLU ? "silu" : "identity"; }

Activation activation_from(const std::string& s) {
  if (s == "silu") return Activation::SiLU;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const NetworkSpec& spec) {
  json j;
  j["num_classes"] = spec.num_classes;
  j["alpha"] = spec.alpha;
  json layers = json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"in_dim", l.in_dim},
                      {"out_dim", l.out_dim},
                      {"activation", activation_name(l.activation)},
                      {"adapted", l.adapted},
                      {"rank", l.rank}});
  }
  j["layers"] = layers;
  if (spec.attention) {
    const auto& a = *spec.attention;
    j["attention"] = {{"vocab_size", a.vocab_size},   {"seq_len", a.seq_len},
                      {"model_dim", a.model_dim},     {"adapt_query", a.adapt_query},
                      {"adapt_value", a.adapt_value}, {"rank", a.rank}};
  } else {
    j["attention"] = nullptr;
  }
  return j;
}

NetworkSpec network_spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.num_classes = j.at("num_classes").get<int>();
  spec.alpha = j.at("alpha").get<double>();
  for (const auto& l : j.at("layers")) {
    spec.layers.push_back({l.at("in_dim").get<int>(), l.at("out_dim").get<int>(),
                           activation_from(l.at("activation").get<std::string>()), l.at("adapted").get<bool>(),
                           l.at("rank").get<int>()});
  }
  if (j.contains("attention") && !j.at("attention").is_null()) {
    const auto& a = j.at("attention");
    spec.attention = AttentionSpec{a.at("vocab_size").get<int>(), a.at("seq_len").get<int>(),
                                   a.at("model_dim").get<int>(),  a.at("adapt_query").get<bool>(),
                                   a.at("adapt_value").get<bool>(), a.at("rank").get<int>()};
  }
  spec.validate();
  return spec;
}

json to_json(const CurveConfig& config) {
  return {{"num_anchors", config.num_anchors()}, {"handles_per_segment", config.handles_per_segment()}};
}

CurveConfig curve_config_from_json(const json& j) {
  return CurveConfig(j.at("num_anchors").get<int>(), j.at("handles_per_segment").get<int>());
}

json temperature_to_json(double temperature) {
  if (std::isinf(temperature)) return "inf";
  return temperature;
}

double temperature_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad temperature '" + s + "'");
    return v;
  }
  return j.get<double>();
}

json to_json(const TrainConfig& c) {
  json j;
  j["total_steps"] = c.total_steps;
  j["batch_size"] = c.batch_size;
  j["peak_lr"] = c.peak_lr;
  j["pct_start"] = c.pct_start;
  j["div_factor"] = c.div_factor;
  j["final_div_factor"] = c.final_div_factor;
  j["weight_decay"] = c.weight_decay;
  j["jsd_lambda"] = c.jsd_lambda;
  j["jsd_tau"] = c.jsd_tau;
  j["jsd_penalty"] = c.jsd_penalty == JsdPenalty::Hinge ? "hinge" : "cap";
  j["rho"] = c.rho;
  j["resample_every"] = c.resample_every;
  j["rho_warmup"] = c.rho_warmup;
  j["repulsive_lambda"] = c.repulsive_lambda;
  j["val_fraction"] = c.val_fraction;
  j["eval_every"] = c.eval_every;
  j["patience"] = c.patience;
  j["val_grid_points"] = c.val_grid_points ? json(*c.val_grid_points) : json(nullptr);
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  read_if(j, "total_steps", c.total_steps);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "peak_lr", c.peak_lr);
  read_if(j, "pct_start", c.pct_start);
  read_if(j, "div_factor", c.div_factor);
  read_if(j, "final_div_factor", c.final_div_factor);
  read_if(j, "weight_decay", c.weight_decay);
  read_if(j, "jsd_lambda", c.jsd_lambda);
  read_if(j, "jsd_tau", c.jsd_tau);
  if (j.contains("jsd_penalty")) {
    const auto p = j.at("jsd_penalty").get<std::string>();
    if (p == "hinge") c.jsd_penalty = JsdPenalty::Hinge;
    else if (p == "cap") c.jsd_penalty = JsdPenalty::Cap;
    else throw std::invalid_argument("unknown jsd_penalty '" + p + "'");
  }
  read_if(j, "rho", c.rho);
  read_if(j, "resample_every", c.resample_every);
  read_if(j, "rho_warmup", c.rho_warmup);
  read_if(j, "repulsive_lambda", c.repulsive_lambda);
  read_if(j, "val_fraction", c.val_fraction);
  read_if(j, "eval_every", c.eval_every);
  read_if(j, "patience", c.patience);
  if (j.contains("val_grid_points")) {
    const auto& v = j.at("val_grid_points");
    c.val_grid_points = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
  }
  read_if(j, "seed", c.seed);
  c.validate();
  return c;
}

}  // namespace lcurve
