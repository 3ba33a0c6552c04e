// SPDX-License-Identifier: Apache-2.0
#include "lcurve/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lcurve/errors.hpp"

namespace lcurve {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void apply_activation(Activation act, const Matrix& z, Matrix& out) {
  if (act == Activation::Identity) {
    out = z;
    return;
  }
  out.resize(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z.data()[i];
    out.data()[i] = v * sigmoid(v);
  }
}

void apply_activation_grad(Activation act, const Matrix& z, Matrix& grad) {
  if (act == Activation::Identity) return;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double v = z.data()[i];
    const double s = sigmoid(v);
    grad.data()[i] *= s * (1.0 + v * (1.0 - s));
  }
}

void row_softmax(const Matrix& logits, Matrix& probs, Matrix& log_probs) {
  probs.resize(logits.rows(), logits.cols());
  log_probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) sum += std::exp(logits(r, c) - mx);
    const double lse = mx + std::log(sum);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      log_probs(r, c) = logits(r, c) - lse;
      probs(r, c) = std::exp(log_probs(r, c));
    }
  }
}

void require_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError(where, "non-finite activation");
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return m;
}

}  // namespace

int NetworkSpec::input_dim() const {
  if (attention) return attention->seq_len;
  return layers.empty() ? 0 : layers.front().in_dim;
}

void NetworkSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("network needs at least two classes");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (layers.empty()) throw std::invalid_argument("network needs at least one dense layer");
  int expected_in = layers.front().in_dim;
  if (attention) {
    const auto& a = *attention;
    if (a.vocab_size < 1 || a.seq_len < 1 || a.model_dim < 1) {
      throw std::invalid_argument("attention dimensions must be positive");
    }
    if ((a.adapt_query || a.adapt_value) && (a.rank < 1 || a.rank > a.model_dim)) {
      throw std::invalid_argument("attention rank must be in [1, model_dim]");
    }
    expected_in = a.model_dim;
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& layer = layers[l];
    const std::string tag = "layer " + std::to_string(l);
    if (layer.in_dim < 1 || layer.out_dim < 1) throw std::invalid_argument(tag + ": dimensions must be positive");
    if (layer.in_dim != expected_in) throw std::invalid_argument(tag + ": input dimension does not chain");
    if (layer.adapted && (layer.rank < 1 || layer.rank > std::min(layer.in_dim, layer.out_dim))) {
      throw std::invalid_argument(tag + ": rank must be in [1, min(d_in, d_out)]");
    }
    expected_in = layer.out_dim;
  }
  if (layers.back().out_dim != num_classes) throw std::invalid_argument("output layer width != class count");
  if (layers.back().activation != Activation::Identity) {
    throw std::invalid_argument("output layer must use the identity activation");
  }
}

NetworkSpec NetworkSpec::mlp(int input_dim, const std::vector<int>& hidden, int num_classes, int rank,
                             double alpha) {
  NetworkSpec spec;
  spec.num_classes = num_classes;
  spec.alpha = alpha;
  int in = input_dim;
  for (int width : hidden) {
    spec.layers.push_back({in, width, Activation::SiLU, true, std::min({rank, in, width})});
    in = width;
  }
  spec.layers.push_back({in, num_classes, Activation::Identity, true, std::min({rank, in, num_classes})});
  spec.validate();
  return spec;
}

NetworkSpec NetworkSpec::attention_classifier(int vocab_size, int seq_len, int model_dim,
                                              const std::vector<int>& hidden, int num_classes, int rank,
                                              double alpha) {
  NetworkSpec spec = mlp(model_dim, hidden, num_classes, rank, alpha);
  spec.attention = AttentionSpec{vocab_size, seq_len, model_dim, true, true, std::min(rank, model_dim)};
  spec.validate();
  return spec;
}

std::vector<WeightSite> build_sites(const NetworkSpec& spec) {
  std::vector<WeightSite> sites;
  Eigen::Index offset = 0;
  auto add = [&](std::string name, SiteKind kind, int layer, int in, int out, bool adapted, int rank) {
    WeightSite s;
    s.name = std::move(name);
    s.kind = kind;
    s.layer = layer;
    s.in_dim = in;
    s.out_dim = out;
    s.adapted = adapted;
    s.rank = adapted ? rank : 0;
    s.scale = adapted ? spec.alpha / static_cast<double>(rank) : 0.0;
    s.offset = offset;
    offset += s.a_size() + s.b_size();
    sites.push_back(std::move(s));
  };
  if (spec.attention) {
    const auto& a = *spec.attention;
    add("attn.query", SiteKind::Query, -1, a.model_dim, a.model_dim, a.adapt_query, a.rank);
    add("attn.key", SiteKind::Key, -1, a.model_dim, a.model_dim, false, 0);
    add("attn.value", SiteKind::Value, -1, a.model_dim, a.model_dim, a.adapt_value, a.rank);
  }
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& layer = spec.layers[l];
    add("dense" + std::to_string(l), SiteKind::Dense, static_cast<int>(l), layer.in_dim, layer.out_dim,
        layer.adapted, layer.rank);
  }
  return sites;
}

BaseWeights::BaseWeights(std::vector<Matrix> site_weights, std::vector<Vector> biases, Matrix token_embedding,
                         Matrix position_embedding)
    : site_weights_(std::move(site_weights)),
      biases_(std::move(biases)),
      token_embedding_(std::move(token_embedding)),
      position_embedding_(std::move(position_embedding)) {}

BaseWeights BaseWeights::random(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Matrix> weights;
  for (const auto& site : build_sites(spec)) {
    weights.push_back(gaussian_matrix(site.out_dim, site.in_dim, 1.0 / std::sqrt(site.in_dim), rng));
  }
  std::vector<Vector> biases;
  for (const auto& layer : spec.layers) {
    Vector b(layer.out_dim);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal(0.0, 0.1);
    biases.push_back(std::move(b));
  }
  Matrix tokens, positions;
  if (spec.attention) {
    tokens = gaussian_matrix(spec.attention->vocab_size, spec.attention->model_dim, 1.0, rng);
    positions = gaussian_matrix(spec.attention->seq_len, spec.attention->model_dim, 1.0, rng);
  }
  return BaseWeights(std::move(weights), std::move(biases), std::move(tokens), std::move(positions));
}

LoraModel::LoraModel(NetworkSpec spec, BaseWeights base) : spec_(std::move(spec)), base_(std::move(base)) {
  spec_.validate();
  sites_ = build_sites(spec_);
  adapter_dim_ = 0;
  for (const auto& s : sites_) adapter_dim_ += s.a_size() + s.b_size();

  if (base_.site_weights().size() != sites_.size()) throw std::invalid_argument("base weight count mismatch");
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const Matrix& w = base_.site_weights()[i];
    if (w.rows() != sites_[i].out_dim || w.cols() != sites_[i].in_dim) {
      throw std::invalid_argument("base weight shape mismatch at " + sites_[i].name);
    }
    if (!w.allFinite()) throw std::invalid_argument("non-finite base weight at " + sites_[i].name);
  }
  if (base_.biases().size() != spec_.layers.size()) throw std::invalid_argument("bias count mismatch");
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    if (base_.biases()[l].size() != spec_.layers[l].out_dim) throw std::invalid_argument("bias shape mismatch");
  }
  if (spec_.attention) {
    const auto& a = *spec_.attention;
    if (base_.token_embedding().rows() != a.vocab_size || base_.token_embedding().cols() != a.model_dim ||
        base_.position_embedding().rows() != a.seq_len || base_.position_embedding().cols() != a.model_dim) {
      throw std::invalid_argument("embedding shape mismatch");
    }
  }
}

void LoraModel::check_theta(const Vector& theta) const {
  if (theta.size() != adapter_dim_) {
    throw std::invalid_argument("adapter vector has dimension " + std::to_string(theta.size()) + ", expected " +
                                std::to_string(adapter_dim_));
  }
}

void LoraModel::check_inputs(const Matrix& inputs) const {
  if (inputs.rows() == 0) throw std::invalid_argument("empty batch");
  if (inputs.cols() != spec_.input_dim()) throw std::invalid_argument("input dimension mismatch");
  if (spec_.attention) {
    const double vocab = spec_.attention->vocab_size;
    for (Eigen::Index i = 0; i < inputs.size(); ++i) {
      const double tok = inputs.data()[i];
      if (!(tok >= 0.0 && tok < vocab) || tok != std::floor(tok)) {
        throw std::invalid_argument("token id out of range");
      }
    }
  }
}

AdapterFactors LoraModel::unflatten(const Vector& theta) const {
  check_theta(theta);
  AdapterFactors f;
  f.a.resize(sites_.size());
  f.b.resize(sites_.size());
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const auto& s = sites_[i];
    if (!s.adapted) continue;
    f.a[i] = Eigen::Map<const Matrix>(theta.data() + s.offset, s.rank, s.in_dim);
    f.b[i] = Eigen::Map<const Matrix>(theta.data() + s.offset + s.a_size(), s.out_dim, s.rank);
  }
  return f;
}

Vector LoraModel::flatten(const AdapterFactors& factors) const {
  if (factors.a.size() != sites_.size() || factors.b.size() != sites_.size()) {
    throw std::invalid_argument("factor count mismatch");
  }
  Vector theta(adapter_dim_);
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const auto& s = sites_[i];
    if (!s.adapted) continue;
    if (factors.a[i].rows() != s.rank || factors.a[i].cols() != s.in_dim || factors.b[i].rows() != s.out_dim ||
        factors.b[i].cols() != s.rank) {
      throw std::invalid_argument("factor shape mismatch at " + s.name);
    }
    Eigen::Map<Matrix>(theta.data() + s.offset, s.rank, s.in_dim) = factors.a[i];
    Eigen::Map<Matrix>(theta.data() + s.offset + s.a_size(), s.out_dim, s.rank) = factors.b[i];
  }
  return theta;
}

AdapterCoordinate LoraModel::locate_coordinate(Eigen::Index index) const {
  if (index < 0 || index >= adapter_dim_) throw std::out_of_range("adapter coordinate out of range");
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const auto& s = sites_[i];
    if (!s.adapted) continue;
    Eigen::Index local = index - s.offset;
    if (local < 0 || local >= s.a_size() + s.b_size()) continue;
    if (local < s.a_size()) {
      return {i, false, static_cast<int>(local / s.in_dim), static_cast<int>(local % s.in_dim)};
    }
    local -= s.a_size();
    return {i, true, static_cast<int>(local / s.rank), static_cast<int>(local % s.rank)};
  }
  throw std::logic_error("adapter layout is not contiguous");
}

SiteMatrices LoraModel::materialize_weights(const Vector& theta) const {
  const AdapterFactors f = unflatten(theta);
  SiteMatrices w = base_.site_weights();
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (!sites_[i].adapted) continue;
    w[i].noalias() += sites_[i].scale * (f.b[i] * f.a[i]);
  }
  return w;
}

Prediction LoraModel::forward(const Vector& theta, const Matrix& inputs) const {
  return forward_weights(materialize_weights(theta), inputs);
}

Prediction LoraModel::forward_weights(const SiteMatrices& weights, const Matrix& inputs) const {
  return forward_tape(weights, inputs).prediction;
}

ForwardTape LoraModel::forward_tape(const SiteMatrices& weights, const Matrix& inputs) const {
  check_inputs(inputs);
  if (weights.size() != sites_.size()) throw std::invalid_argument("weight count mismatch");
  ForwardTape tape;
  const Eigen::Index n = inputs.rows();
  std::size_t dense_site = 0;

  Matrix h;
  if (spec_.attention) {
    const auto& a = *spec_.attention;
    const Matrix& wq = weights[0];
    const Matrix& wk = weights[1];
    const Matrix& wv = weights[2];
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(a.model_dim));
    h.resize(n, a.model_dim);
    tape.embedded.resize(static_cast<std::size_t>(n));
    tape.queries.resize(static_cast<std::size_t>(n));
    tape.keys.resize(static_cast<std::size_t>(n));
    tape.values.resize(static_cast<std::size_t>(n));
    tape.attention.resize(static_cast<std::size_t>(n));
    for (Eigen::Index e = 0; e < n; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      Matrix x0(a.seq_len, a.model_dim);
      for (int p = 0; p < a.seq_len; ++p) {
        const auto tok = static_cast<Eigen::Index>(inputs(e, p));
        x0.row(p) = base_.token_embedding().row(tok) + base_.position_embedding().row(p);
      }
      Matrix q = x0 * wq.transpose();
      Matrix k = x0 * wk.transpose();
      Matrix v = x0 * wv.transpose();
      Matrix scores = (q * k.transpose()) * inv_sqrt_d;
      Matrix attn, unused;
      row_softmax(scores, attn, unused);
      h.row(e) = (attn * v).colwise().mean();
      tape.embedded[ue] = std::move(x0);
      tape.queries[ue] = std::move(q);
      tape.keys[ue] = std::move(k);
      tape.values[ue] = std::move(v);
      tape.attention[ue] = std::move(attn);
    }
    require_finite(h, "attention");
    dense_site = 3;
  } else {
    h = inputs;
  }

  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    const Matrix& w = weights[dense_site + l];
    Matrix z = h * w.transpose();
    z.rowwise() += base_.biases()[l].transpose();
    require_finite(z, sites_[dense_site + l].name);
    tape.layer_inputs.push_back(std::move(h));
    Matrix next;
    apply_activation(spec_.layers[l].activation, z, next);
    tape.pre_activations.push_back(std::move(z));
    h = std::move(next);
  }
  tape.prediction.logits = std::move(h);
  row_softmax(tape.prediction.logits, tape.prediction.probs, tape.prediction.log_probs);
  return tape;
}

SiteMatrices LoraModel::backward_weights(const SiteMatrices& weights, const ForwardTape& tape,
                                         const Matrix& logit_grad) const {
  SiteMatrices grads(sites_.size());
  const std::size_t dense_site = spec_.attention ? 3 : 0;
  const std::size_t num_layers = spec_.layers.size();

  Matrix dz = logit_grad;
  for (std::size_t l = num_layers; l-- > 0;) {
    const std::size_t site = dense_site + l;
    if (l + 1 < num_layers) apply_activation_grad(spec_.layers[l].activation, tape.pre_activations[l], dz);
    if (sites_[site].adapted) grads[site] = dz.transpose() * tape.layer_inputs[l];
    if (l > 0 || spec_.attention) dz = dz * weights[site];
  }
  if (!spec_.attention) return grads;

  // dz now holds d(loss)/d(pooled attention output), one row per example.
  const auto& a = *spec_.attention;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(a.model_dim));
  const bool want_q = sites_[0].adapted;
  const bool want_v = sites_[2].adapted;
  if (want_q) grads[0] = Matrix::Zero(a.model_dim, a.model_dim);
  if (want_v) grads[2] = Matrix::Zero(a.model_dim, a.model_dim);
  for (Eigen::Index e = 0; e < dz.rows(); ++e) {
    const auto ue = static_cast<std::size_t>(e);
    const Matrix& attn = tape.attention[ue];
    Matrix d_out = Matrix::Ones(a.seq_len, 1) * dz.row(e) / static_cast<double>(a.seq_len);
    if (want_v) grads[2].noalias() += (attn.transpose() * d_out).transpose() * tape.embedded[ue];
    if (want_q) {
      Matrix d_attn = d_out * tape.values[ue].transpose();
      Matrix d_scores(attn.rows(), attn.cols());
      for (Eigen::Index r = 0; r < attn.rows(); ++r) {
        const double dot = attn.row(r).dot(d_attn.row(r));
        d_scores.row(r) = (attn.row(r).array() * (d_attn.row(r).array() - dot)).matrix();
      }
      d_scores *= inv_sqrt_d;
      const Matrix d_q = d_scores * tape.keys[ue];
      grads[0].noalias() += d_q.transpose() * tape.embedded[ue];
    }
  }
  return grads;
}

Vector LoraModel::adapter_gradient(const AdapterFactors& factors, const SiteMatrices& weight_grads) const {
  Vector g = Vector::Zero(adapter_dim_);
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    const auto& s = sites_[i];
    if (!s.adapted) continue;
    const Matrix& gw = weight_grads[i];
    Eigen::Map<Matrix>(g.data() + s.offset, s.rank, s.in_dim) = s.scale * (factors.b[i].transpose() * gw);
    Eigen::Map<Matrix>(g.data() + s.offset + s.a_size(), s.out_dim, s.rank) =
        s.scale * (gw * factors.a[i].transpose());
  }
  return g;
}

LossAndGradient LoraModel::backward(const Vector& theta, const Matrix& inputs, std::span<const int> labels,
                                    const SiteMatrices* noise) const {
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows()) throw std::invalid_argument("label count mismatch");
  SiteMatrices w = materialize_weights(theta);
  if (noise) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if ((*noise)[i].size() > 0) w[i] += (*noise)[i];
    }
  }
  const ForwardTape tape = forward_tape(w, inputs);
  LossAndGradient out;
  out.loss = mean_cross_entropy(tape.prediction.log_probs, labels);
  const SiteMatrices gw = backward_weights(w, tape, cross_entropy_logit_grad(tape.prediction.probs, labels));
  out.gradient = adapter_gradient(unflatten(theta), gw);
  if (!std::isfinite(out.loss) || !out.gradient.allFinite()) throw NumericError("backward", "non-finite gradient");
  return out;
}

SiteMatrices LoraModel::draw_standard_noise(Rng& rng) const {
  SiteMatrices z(sites_.size());
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (sites_[i].adapted) z[i] = gaussian_matrix(sites_[i].out_dim, sites_[i].in_dim, 1.0, rng);
  }
  return z;
}

SiteMatrices LoraModel::scale_flat_noise(const SiteMatrices& weights, double rho, const SiteMatrices& standard) const {
  if (rho < 0.0) throw std::domain_error("rho must be non-negative");
  SiteMatrices eps(sites_.size());
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (!sites_[i].adapted) continue;
    const Matrix& w = weights[i];
    eps[i].resize(w.rows(), w.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const double stddev = std::sqrt(rho / static_cast<double>(sites_[i].in_dim) * w.row(r).squaredNorm());
      eps[i].row(r) = stddev * standard[i].row(r);
    }
  }
  return eps;
}

SiteMatrices LoraModel::sample_flat_noise(const SiteMatrices& weights, double rho, Rng& rng) const {
  return scale_flat_noise(weights, rho, draw_standard_noise(rng));
}

SiteMatrices LoraModel::weight_velocity(const Vector& theta, const Vector& dtheta) const {
  const AdapterFactors f = unflatten(theta);
  const AdapterFactors df = unflatten(dtheta);
  SiteMatrices v(sites_.size());
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (!sites_[i].adapted) continue;
    v[i] = sites_[i].scale * (df.b[i] * f.a[i] + f.b[i] * df.a[i]);
  }
  return v;
}

double mean_cross_entropy(const Matrix& log_probs, std::span<const int> labels) {
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= log_probs.cols()) throw std::invalid_argument("label out of range");
    sum -= log_probs(static_cast<Eigen::Index>(i), y);
  }
  return sum / static_cast<double>(labels.size());
}

Matrix cross_entropy_logit_grad(const Matrix& probs, std::span<const int> labels) {
  Matrix g = probs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= probs.cols()) throw std::invalid_argument("label out of range");
    g(static_cast<Eigen::Index>(i), y) -= 1.0;
  }
  g /= static_cast<double>(labels.size());
  return g;
}

double site_norm(const SiteMatrices& m) {
  double sq = 0.0;
  for (const auto& x : m) {
    if (x.size() > 0) sq += x.squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace lcurve
