// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcurve/curve.hpp"
#include "lcurve/network.hpp"

namespace lcurve {

inline constexpr char kCheckpointMagic[4] = {'L', 'C', 'R', 'V'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Network, frozen base weights and a control-point set. A single adapter
/// is stored as the one-point curve (N = 1, m = 0).
///
/// On disk: `<name>.lcrv` holds the arrays, little-endian:
///   "LCRV" | u32 version | u64 array count | { u64 length | f64[length] }*
/// in the order token embedding, position embedding, one W0 per weight site,
/// one bias per dense layer, then every control point. Matrices are
/// row-major. `<name>.json` holds the network spec, curve config, frozen
/// flags, method string and free-form metadata.
struct Checkpoint {
  NetworkSpec spec;
  BaseWeights base;
  ControlPointSet curve{CurveConfig(1, 0), {}, {}};
  std::string method;
  nlohmann::json metadata = nlohmann::json::object();
};

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws FormatError on a bad magic, version, truncation or layout mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Raw array container round-trip, exposed for tooling and tests.
void write_arrays(std::ostream& out, const std::vector<std::vector<double>>& arrays);
std::vector<std::vector<double>> read_arrays(std::istream& in);

}  // namespace lcurve
