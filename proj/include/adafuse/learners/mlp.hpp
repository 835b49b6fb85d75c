#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>
#include <adafuse/core/params.hpp>
#include <adafuse/core/rng.hpp>
#include <adafuse/data/dataset.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adafuse {

enum class Activation { Relu, Tanh };

struct MlpConfig {
  std::vector<std::size_t> hidden_dims;
  Activation activation = Activation::Relu;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double l2 = 0.0;
  /// Stream 0 of this seed initializes weights, stream 1 shuffles batches.
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(epochs >= 1, "MlpConfig: epochs must be >= 1");
    detail::require(batch_size >= 1, "MlpConfig: batch_size must be >= 1");
    detail::require(learning_rate > 0.0, "MlpConfig: learning_rate must be > 0");
    detail::require(l2 >= 0.0, "MlpConfig: l2 must be >= 0");
    for (std::size_t h : hidden_dims) detail::require(h >= 1, "MlpConfig: hidden dims must be >= 1");
  }
};

struct MlpModel {
  /// Hidden layers followed by the output layer.
  std::vector<Affine> layers;
  Activation activation = Activation::Relu;
  std::size_t input_dim = 0;
  std::size_t class_count = 0;
  /// Full-data training loss before the first epoch.
  double initial_loss = 0.0;
  /// Full-data training loss after each epoch.
  std::vector<double> loss_history;

  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  bool same_parameters(const MlpModel& other) const { return layers == other.layers; }
};

inline MlpModel mlp_init(const MlpConfig& config, std::size_t input_dim, std::size_t class_count) {
  config.validate();
  detail::require(input_dim >= 1, "mlp_init: input_dim must be >= 1");
  detail::require(class_count >= 2, "mlp_init: class_count must be >= 2");
  RngStream rng = derive_stream(config.seed, 0);
  MlpModel model;
  model.activation = config.activation;
  model.input_dim = input_dim;
  model.class_count = class_count;
  std::size_t fan_in = input_dim;
  auto add_layer = [&](std::size_t fan_out) {
    Affine layer{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& w : layer.weight.values()) w = std_dev * rng.next_normal();
    model.layers.push_back(std::move(layer));
    fan_in = fan_out;
  };
  for (std::size_t h : config.hidden_dims) add_layer(h);
  add_layer(class_count);
  return model;
}

struct MlpForward {
  Matrix logits;
  /// Output of the last hidden activation, or the input itself with no hidden layers.
  Matrix penultimate;
  /// Input followed by every hidden activation (kept for backprop).
  std::vector<Matrix> activations;
};

namespace detail {

inline void activate_inplace(Matrix& z, Activation act) {
  for (double& v : z.values()) v = act == Activation::Relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
}

/// Multiplies the upstream gradient by the activation derivative, given the activation output.
inline void activation_backward_inplace(Matrix& grad, const Matrix& out, Activation act) {
  auto g = grad.values();
  const auto a = out.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] *= act == Activation::Relu ? (a[i] > 0.0 ? 1.0 : 0.0) : 1.0 - a[i] * a[i];
  }
}

}  // namespace detail

inline MlpForward mlp_forward(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim) {
    throw ContractError("mlp_forward: input has " + std::to_string(x.cols()) +
                        " columns, model expects " + std::to_string(model.input_dim));
  }
  MlpForward f;
  f.activations.push_back(x);
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    Matrix z = model.layers[l].apply(f.activations.back());
    detail::activate_inplace(z, model.activation);
    f.activations.push_back(std::move(z));
  }
  f.penultimate = f.activations.back();
  f.logits = model.layers.back().apply(f.penultimate);
  return f;
}

inline Matrix mlp_predict_proba(const MlpModel& model, const Matrix& x) {
  return softmax_rows(mlp_forward(model, x).logits);
}

struct MlpGradients {
  std::vector<Affine> layers;
  double loss = 0.0;

  std::vector<const Matrix*> tensors() const {
    std::vector<const Matrix*> out;
    for (const auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
};

/// Weighted softmax cross-entropy sum_i w_i * (-log p_{i,y_i}) / sum_i w_i over the rows given.
/// A zero total weight contributes nothing. Returns per-row probabilities via `probs` if set.
inline double weighted_cross_entropy(const Matrix& logits, std::span<const std::size_t> y,
                                     std::span<const double> weights, Matrix* probs = nullptr) {
  double total_w = 0.0;
  for (double w : weights) total_w += w;
  double loss = 0.0;
  Matrix p = softmax_rows(logits);
  if (total_w > 0.0) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (weights[i] == 0.0) continue;
      // log-softmax directly for accuracy in the saturated regime
      const auto row = logits.row(i);
      const double mx = *std::max_element(row.begin(), row.end());
      double s = 0.0;
      for (double v : row) s += std::exp(v - mx);
      loss += weights[i] * -(row[y[i]] - mx - std::log(s));
    }
    loss /= total_w;
  }
  if (probs) *probs = std::move(p);
  return loss;
}

inline double l2_penalty(const MlpModel& model, double l2) {
  if (l2 == 0.0) return 0.0;
  double sq = 0.0;
  for (const auto& l : model.layers)
    for (double w : l.weight.values()) sq += w * w;
  return 0.5 * l2 * sq;
}

inline double mlp_loss(const MlpModel& model, const Matrix& x, std::span<const std::size_t> y,
                       std::span<const double> weights, double l2) {
  return weighted_cross_entropy(mlp_forward(model, x).logits, y, weights) + l2_penalty(model, l2);
}

/// Exact gradient of the weighted loss plus l2 * ||W||^2 / 2 (weights only, not biases).
inline MlpGradients mlp_gradients(const MlpModel& model, const Matrix& x,
                                  std::span<const std::size_t> y, std::span<const double> weights,
                                  double l2) {
  detail::require(y.size() == x.rows() && weights.size() == x.rows(),
                  "mlp_gradients: batch size mismatch");
  const MlpForward f = mlp_forward(model, x);
  Matrix probs;
  MlpGradients g;
  g.loss = weighted_cross_entropy(f.logits, y, weights, &probs) + l2_penalty(model, l2);

  double total_w = 0.0;
  for (double w : weights) total_w += w;
  Matrix upstream(x.rows(), model.class_count);
  if (total_w > 0.0) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double scale = weights[i] / total_w;
      if (scale == 0.0) continue;
      for (std::size_t c = 0; c < model.class_count; ++c) {
        upstream(i, c) = scale * (probs(i, c) - (c == y[i] ? 1.0 : 0.0));
      }
    }
  }

  g.layers.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Matrix& input = f.activations[l];
    g.layers[l].weight = matmul_tn(input, upstream);
    g.layers[l].bias = column_sums(upstream);
    if (l2 != 0.0) g.layers[l].weight += l2 * model.layers[l].weight;
    if (l > 0) {
      Matrix down = matmul_nt(upstream, model.layers[l].weight);
      detail::activation_backward_inplace(down, input, model.activation);
      upstream = std::move(down);
    }
  }
  return g;
}

/// Adam over mini-batches reshuffled every epoch. Weights default to all ones.
inline MlpModel mlp_train(MlpModel model, const Dataset& train,
                          std::optional<std::span<const double>> instance_weights,
                          const MlpConfig& config) {
  config.validate();
  detail::require(train.size() > 0, "mlp_train: empty training set");
  detail::require(train.dim() == model.input_dim, "mlp_train: input dimension mismatch");
  std::vector<double> weights(train.size(), 1.0);
  if (instance_weights) {
    detail::require(instance_weights->size() == train.size(), "mlp_train: weights length mismatch");
    double total = 0.0;
    for (double w : *instance_weights) {
      detail::require(w >= 0.0 && std::isfinite(w), "mlp_train: weights must be finite and >= 0");
      total += w;
    }
    detail::require(total > 0.0, "mlp_train: weights must have a positive sum");
    weights.assign(instance_weights->begin(), instance_weights->end());
  }

  RngStream shuffle_rng = derive_stream(config.seed, 1);
  auto params = model.parameters();
  Adam adam({config.learning_rate, config.beta1, config.beta2, config.adam_eps}, params);

  model.initial_loss = mlp_loss(model, train.x, train.y, weights, config.l2);
  model.loss_history.clear();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> batch_y;
  std::vector<double> batch_w;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Matrix bx = select_rows(train.x, idx);
      batch_y.clear();
      batch_w.clear();
      for (std::size_t i : idx) {
        batch_y.push_back(train.y[i]);
        batch_w.push_back(weights[i]);
      }
      const MlpGradients g = mlp_gradients(model, bx, batch_y, batch_w, config.l2);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("mlp_train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_no));
      }
      adam.step(params, g.tensors());
    }
    const double loss = mlp_loss(model, train.x, train.y, weights, config.l2);
    if (!std::isfinite(loss)) {
      throw TrainingError("mlp_train: non-finite loss after epoch " + std::to_string(epoch));
    }
    model.loss_history.push_back(loss);
  }
  return model;
}

}  // namespace adafuse
