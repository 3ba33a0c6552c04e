// SPDX-License-Identifier: Apache-2.0
#include "lcurve/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lcurve/errors.hpp"
#include "lcurve/serialization.hpp"

namespace lcurve {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

std::uint64_t get_le(std::istream& in, int bytes) {
  unsigned char b[8] = {};
  in.read(reinterpret_cast<char*>(b), bytes);
  if (!in) throw FormatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::vector<double> flat(const Matrix& m) { return {m.data(), m.data() + m.size()}; }
std::vector<double> flat(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix as_matrix(const std::vector<double>& a, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (static_cast<Eigen::Index>(a.size()) != rows * cols) throw FormatError("array size mismatch for " + what);
  Matrix m(rows, cols);
  if (!a.empty()) std::memcpy(m.data(), a.data(), a.size() * sizeof(double));
  return m;
}

Vector as_vector(const std::vector<double>& a, Eigen::Index n, const std::string& what) {
  if (static_cast<Eigen::Index>(a.size()) != n) throw FormatError("array size mismatch for " + what);
  return Eigen::Map<const Vector>(a.data(), n);
}

}  // namespace

void write_arrays(std::ostream& out, const std::vector<std::vector<double>>& arrays) {
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, arrays.size());
  for (const auto& a : arrays) {
    put_u64(out, a.size());
    for (double v : a) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

std::vector<std::vector<double>> read_arrays(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic");
  const auto version = static_cast<std::uint32_t>(get_le(in, 4));
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t count = get_le(in, 8);
  std::vector<std::vector<double>> arrays;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = get_le(in, 8);
    if (len > (std::uint64_t{1} << 32)) throw FormatError("implausible array length");
    std::vector<double> a(static_cast<std::size_t>(len));
    for (auto& v : a) v = std::bit_cast<double>(get_le(in, 8));
    arrays.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint arrays");
  return arrays;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".json");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const LoraModel model(ckpt.spec, ckpt.base);
  ckpt.curve.validate();
  if (ckpt.curve.dimension() != model.adapter_dim()) throw std::invalid_argument("curve dimension != adapter dim");

  std::vector<std::vector<double>> arrays;
  arrays.push_back(flat(ckpt.base.token_embedding()));
  arrays.push_back(flat(ckpt.base.position_embedding()));
  for (const auto& w : ckpt.base.site_weights()) arrays.push_back(flat(w));
  for (const auto& b : ckpt.base.biases()) arrays.push_back(flat(b));
  for (const auto& p : ckpt.curve.points) arrays.push_back(flat(p));

  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + path.string());
  write_arrays(bin, arrays);
  if (!bin) throw std::runtime_error("write failed for " + path.string());

  nlohmann::json side;
  side["format"] = "LCRV";
  side["version"] = kCheckpointVersion;
  side["method"] = ckpt.method;
  side["network"] = to_json(ckpt.spec);
  side["curve"] = to_json(ckpt.curve.config);
  std::vector<bool> frozen(ckpt.curve.frozen.begin(), ckpt.curve.frozen.end());
  side["curve"]["frozen"] = frozen;
  side["adapter_dim"] = model.adapter_dim();
  side["array_count"] = arrays.size();
  side["metadata"] = ckpt.metadata;
  std::ofstream js(sidecar_path(path), std::ios::trunc);
  if (!js) throw std::runtime_error("cannot write " + sidecar_path(path).string());
  js << side.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw FormatError("missing checkpoint sidecar " + sidecar_path(path).string());
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint sidecar: ") + e.what());
  }
  if (side.value("format", "") != "LCRV" || side.value("version", 0u) != kCheckpointVersion) {
    throw FormatError("sidecar format/version mismatch");
  }

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw FormatError("missing checkpoint " + path.string());
  const auto arrays = read_arrays(bin);

  Checkpoint ckpt;
  ckpt.spec = network_spec_from_json(side.at("network"));
  ckpt.method = side.value("method", "");
  ckpt.metadata = side.value("metadata", nlohmann::json::object());
  const CurveConfig config = curve_config_from_json(side.at("curve"));
  const auto sites = build_sites(ckpt.spec);
  const std::size_t expected = 2 + sites.size() + ckpt.spec.layers.size() +
                               static_cast<std::size_t>(config.num_control_points());
  if (arrays.size() != expected) throw FormatError("checkpoint array count does not match its sidecar");

  std::size_t k = 0;
  Matrix tokens, positions;
  if (ckpt.spec.attention) {
    const auto& a = *ckpt.spec.attention;
    tokens = as_matrix(arrays[k++], a.vocab_size, a.model_dim, "token embedding");
    positions = as_matrix(arrays[k++], a.seq_len, a.model_dim, "position embedding");
  } else {
    if (!arrays[0].empty() || !arrays[1].empty()) throw FormatError("unexpected embedding arrays");
    k = 2;
  }
  std::vector<Matrix> weights;
  for (const auto& s : sites) weights.push_back(as_matrix(arrays[k++], s.out_dim, s.in_dim, s.name));
  std::vector<Vector> biases;
  for (const auto& l : ckpt.spec.layers) biases.push_back(as_vector(arrays[k++], l.out_dim, "bias"));
  ckpt.base = BaseWeights(std::move(weights), std::move(biases), std::move(tokens), std::move(positions));

  const LoraModel model(ckpt.spec, ckpt.base);
  std::vector<Vector> points;
  for (int i = 0; i < config.num_control_points(); ++i) {
    points.push_back(as_vector(arrays[k++], model.adapter_dim(), "control point"));
  }
  const auto frozen = side.at("curve").value("frozen", std::vector<bool>(points.size(), false));
  ckpt.curve = ControlPointSet{config, std::move(points), frozen};
  try {
    ckpt.curve.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return ckpt;
}

}  // namespace lcurve
