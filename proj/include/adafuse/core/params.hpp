#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace adafuse {

/// Weight and bias of an affine map x·weight + bias (weight in×out, bias 1×out).
struct Affine {
  Matrix weight;
  Matrix bias;

  Matrix apply(const Matrix& x) const { return affine(x, weight, bias); }
  bool operator==(const Affine&) const = default;
};

/// Flattens a list of tensors into one 1×P row, in list order.
inline Matrix pack(std::span<const Matrix* const> tensors) {
  std::size_t total = 0;
  for (const Matrix* t : tensors) total += t->size();
  Matrix flat(1, total);
  std::size_t offset = 0;
  for (const Matrix* t : tensors) {
    for (double v : t->values()) flat.values()[offset++] = v;
  }
  return flat;
}

/// Inverse of pack: scatters a 1×P row back into the tensors.
inline void unpack(const Matrix& flat, std::span<Matrix* const> tensors) {
  std::size_t offset = 0;
  for (Matrix* t : tensors) {
    detail::require(offset + t->size() <= flat.size(), "unpack: flat vector too short");
    for (double& v : t->values()) v = flat.values()[offset++];
  }
  detail::require(offset == flat.size(), "unpack: flat vector too long");
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed list of parameter tensors.
class Adam {
 public:
  Adam(AdamConfig config, std::span<Matrix* const> params) : config_(config) {
    for (const Matrix* p : params) {
      first_.emplace_back(p->rows(), p->cols());
      second_.emplace_back(p->rows(), p->cols());
    }
  }

  void step(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
    detail::require(params.size() == first_.size() && grads.size() == first_.size(),
                    "Adam::step: parameter list changed");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto p = params[k]->values();
      const auto g = grads[k]->values();
      auto m = first_[k].values();
      auto v = second_[k].values();
      detail::require(p.size() == g.size(), "Adam::step: gradient shape mismatch");
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        p[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  long t_ = 0;
};

}  // namespace adafuse
