// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include "lcurve/curve.hpp"
#include "lcurve/network.hpp"
#include "lcurve/trainer.hpp"

namespace lcurve {

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CurveConfig& config);
CurveConfig curve_config_from_json(const nlohmann::json& j);

/// Missing keys keep the values of `defaults`.
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults);

/// "inf" for infinite temperature, the number otherwise.
nlohmann::json temperature_to_json(double temperature);
double temperature_from_json(const nlohmann::json& j);

}  // namespace lcurve
