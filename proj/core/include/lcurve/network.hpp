// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcurve/curve.hpp"
#include "lcurve/rng.hpp"

namespace lcurve {

enum class Activation { Identity, SiLU };

/// One dense layer of the classifier head: y = act(W x + b).
struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::SiLU;
  bool adapted = true;
  int rank = 8;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Optional single-head self-attention front end for token sequences.
/// Token and position embeddings are frozen; the key projection is never
/// adapted. The attended values are mean-pooled over positions and fed to
/// the dense layers.
struct AttentionSpec {
  int vocab_size = 0;
  int seq_len = 0;
  int model_dim = 0;
  bool adapt_query = true;
  bool adapt_value = true;
  int rank = 8;

  friend bool operator==(const AttentionSpec&, const AttentionSpec&) = default;
};

struct NetworkSpec {
  std::optional<AttentionSpec> attention;
  std::vector<LayerSpec> layers;
  int num_classes = 2;
  double alpha = 16.0;

  /// Feature count for dense inputs, sequence length for token inputs.
  int input_dim() const;
  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  /// SiLU hidden layers and an identity output layer, all adapted. Each
  /// layer's rank is min(rank, d_in, d_out) so narrow layers stay valid.
  static NetworkSpec mlp(int input_dim, const std::vector<int>& hidden, int num_classes, int rank = 8,
                         double alpha = 16.0);
  static NetworkSpec attention_classifier(int vocab_size, int seq_len, int model_dim,
                                          const std::vector<int>& hidden, int num_classes, int rank = 8,
                                          double alpha = 16.0);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class SiteKind { Query, Key, Value, Dense };

/// A weight matrix of the network (d_out x d_in) and, if adapted, the slice
/// of the flat adapter vector holding its A (r x d_in) then B (d_out x r).
struct WeightSite {
  std::string name;
  SiteKind kind = SiteKind::Dense;
  int layer = -1;
  int in_dim = 0;
  int out_dim = 0;
  bool adapted = false;
  int rank = 0;
  double scale = 0.0;
  Eigen::Index offset = 0;

  Eigen::Index a_size() const noexcept { return adapted ? Eigen::Index{rank} * in_dim : 0; }
  Eigen::Index b_size() const noexcept { return adapted ? Eigen::Index{out_dim} * rank : 0; }
};

/// Frozen pretrained weights. Never modified after construction.
class BaseWeights {
 public:
  BaseWeights() = default;
  BaseWeights(std::vector<Matrix> site_weights, std::vector<Vector> biases, Matrix token_embedding,
              Matrix position_embedding);

  /// Gaussian init with variance 1/d_in; small Gaussian biases; unit-variance
  /// embeddings.
  static BaseWeights random(const NetworkSpec& spec, std::uint64_t seed);

  const std::vector<Matrix>& site_weights() const noexcept { return site_weights_; }
  const std::vector<Vector>& biases() const noexcept { return biases_; }
  const Matrix& token_embedding() const noexcept { return token_embedding_; }
  const Matrix& position_embedding() const noexcept { return position_embedding_; }

 private:
  std::vector<Matrix> site_weights_;
  std::vector<Vector> biases_;
  Matrix token_embedding_;
  Matrix position_embedding_;
};

/// Per-site low-rank factors. Non-adapted sites hold empty matrices.
struct AdapterFactors {
  std::vector<Matrix> a;
  std::vector<Matrix> b;
};

struct AdapterCoordinate {
  std::size_t site = 0;
  bool in_b = false;
  int row = 0;
  int col = 0;

  friend bool operator==(const AdapterCoordinate&, const AdapterCoordinate&) = default;
};

/// One matrix per site; empty matrices mean "no contribution".
using SiteMatrices = std::vector<Matrix>;

struct Prediction {
  Matrix logits;
  Matrix probs;
  Matrix log_probs;
};

struct ForwardTape {
  // Attention front end, one entry per example.
  std::vector<Matrix> embedded;
  std::vector<Matrix> queries;
  std::vector<Matrix> keys;
  std::vector<Matrix> values;
  std::vector<Matrix> attention;
  // Dense stack: layer_inputs[l] feeds layer l, pre_activations[l] is its output
  // before the activation.
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  Prediction prediction;
};

struct LossAndGradient {
  double loss = 0.0;
  Vector gradient;
};

/// Frozen base network plus the adapter layout. All methods are const and
/// safe to call concurrently.
class LoraModel {
 public:
  LoraModel(NetworkSpec spec, BaseWeights base);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const BaseWeights& base() const noexcept { return base_; }
  const std::vector<WeightSite>& sites() const noexcept { return sites_; }
  /// D, the number of trainable adapter coordinates.
  Eigen::Index adapter_dim() const noexcept { return adapter_dim_; }

  /// Layout: site-major, A before B, row-major within each matrix.
  AdapterFactors unflatten(const Vector& theta) const;
  Vector flatten(const AdapterFactors& factors) const;
  AdapterCoordinate locate_coordinate(Eigen::Index index) const;

  /// W0 + (alpha/r) B A on adapted sites; W0 elsewhere.
  SiteMatrices materialize_weights(const Vector& theta) const;

  Prediction forward(const Vector& theta, const Matrix& inputs) const;
  Prediction forward_weights(const SiteMatrices& weights, const Matrix& inputs) const;
  ForwardTape forward_tape(const SiteMatrices& weights, const Matrix& inputs) const;

  /// Gradients w.r.t. the effective weight matrix of every adapted site,
  /// given d(loss)/d(logits).
  SiteMatrices backward_weights(const SiteMatrices& weights, const ForwardTape& tape,
                                const Matrix& logit_grad) const;
  /// Chain rule from weight gradients to the flat adapter gradient.
  Vector adapter_gradient(const AdapterFactors& factors, const SiteMatrices& weight_grads) const;

  /// Mean cross-entropy and its exact gradient w.r.t. theta. `noise`, when
  /// given, is added to the materialized weights and treated as constant.
  LossAndGradient backward(const Vector& theta, const Matrix& inputs, std::span<const int> labels,
                           const SiteMatrices* noise = nullptr) const;

  /// Flat-LoRA perturbation: entry (i,j) ~ N(0, rho/d_in * ||W'_i||^2) on
  /// adapted sites, zero matrices elsewhere.
  SiteMatrices sample_flat_noise(const SiteMatrices& weights, double rho, Rng& rng) const;
  /// Same perturbation from a pre-drawn standard-normal matrix per site.
  SiteMatrices scale_flat_noise(const SiteMatrices& weights, double rho, const SiteMatrices& standard) const;
  /// Standard-normal matrices shaped like each adapted site.
  SiteMatrices draw_standard_noise(Rng& rng) const;

  /// dW/dt on adapted sites for theta moving with velocity dtheta:
  /// (alpha/r) (dB A + B dA).
  SiteMatrices weight_velocity(const Vector& theta, const Vector& dtheta) const;

 private:
  void check_inputs(const Matrix& inputs) const;
  void check_theta(const Vector& theta) const;

  NetworkSpec spec_;
  BaseWeights base_;
  std::vector<WeightSite> sites_;
  Eigen::Index adapter_dim_ = 0;
};

/// Weight sites of a spec in flat-vector order.
std::vector<WeightSite> build_sites(const NetworkSpec& spec);

/// Mean categorical cross-entropy of row-wise log-probabilities.
double mean_cross_entropy(const Matrix& log_probs, std::span<const int> labels);
/// (probs - onehot(labels)) / n.
Matrix cross_entropy_logit_grad(const Matrix& probs, std::span<const int> labels);
/// Frobenius norm over all non-empty site matrices.
double site_norm(const SiteMatrices& m);

}  // namespace lcurve
