#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>
#include <adafuse/core/params.hpp>
#include <adafuse/core/rng.hpp>
#include <adafuse/fusion/pca.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace adafuse {

enum class FusionKind { Concat, Sum, Product, Linear, Pca, Attention, Gated };

inline std::string_view to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::Concat: return "concat";
    case FusionKind::Sum: return "sum";
    case FusionKind::Product: return "product";
    case FusionKind::Linear: return "linear";
    case FusionKind::Pca: return "pca";
    case FusionKind::Attention: return "attention";
    case FusionKind::Gated: return "gated";
  }
  return "?";
}

inline FusionKind parse_fusion_kind(std::string_view name) {
  for (auto k : {FusionKind::Concat, FusionKind::Sum, FusionKind::Product, FusionKind::Linear,
                 FusionKind::Pca, FusionKind::Attention, FusionKind::Gated}) {
    if (to_string(k) == name) return k;
  }
  throw ContractError("unknown fusion kind '" + std::string(name) + "'");
}

enum class ElementwiseMode { Sum, Product };

/// Parameters of one fusion layer. Weights use the row-vector convention (x·W):
/// adapters d_i×d_common, attention score map d_common×p with context p×d_common,
/// gates (M·d_common)×d_common.
struct FusionParams {
  FusionKind kind = FusionKind::Concat;
  std::vector<std::size_t> source_dims;
  std::size_t common_dim = 0;
  /// Per-source maps into the common space; empty means sources are used as-is.
  std::vector<Affine> adapters;
  Affine projection;  // Linear
  PcaModel pca;       // Pca
  Affine score;       // Attention: tanh(h·A + b)
  Matrix score_context;  // Attention: per-feature scores = tanh(...)·U
  std::vector<Affine> gates;  // Gated: sigmoid(concat(h)·G_i + c_i)

  std::size_t source_count() const noexcept { return source_dims.size(); }

  std::size_t output_dim() const {
    switch (kind) {
      case FusionKind::Concat:
        return std::accumulate(source_dims.begin(), source_dims.end(), std::size_t{0});
      case FusionKind::Sum:
      case FusionKind::Product:
        return adapters.empty() ? source_dims.front() : common_dim;
      case FusionKind::Linear: return projection.weight.cols();
      case FusionKind::Pca: return pca.components.cols();
      case FusionKind::Attention:
      case FusionKind::Gated: return common_dim;
    }
    return 0;
  }

  std::vector<Matrix*> trainable() {
    std::vector<Matrix*> out;
    for (auto& a : adapters) {
      out.push_back(&a.weight);
      out.push_back(&a.bias);
    }
    if (kind == FusionKind::Linear) {
      out.push_back(&projection.weight);
      out.push_back(&projection.bias);
    }
    if (kind == FusionKind::Attention) {
      out.push_back(&score.weight);
      out.push_back(&score.bias);
      out.push_back(&score_context);
    }
    if (kind == FusionKind::Gated) {
      for (auto& g : gates) {
        out.push_back(&g.weight);
        out.push_back(&g.bias);
      }
    }
    return out;
  }

  std::vector<const Matrix*> trainable() const {
    auto mutable_list = const_cast<FusionParams*>(this)->trainable();
    return {mutable_list.begin(), mutable_list.end()};
  }

  bool operator==(const FusionParams& o) const {
    return kind == o.kind && source_dims == o.source_dims && common_dim == o.common_dim &&
           adapters == o.adapters && projection == o.projection && pca.mean == o.pca.mean &&
           pca.components == o.pca.components && pca.eigenvalues == o.pca.eigenvalues &&
           score == o.score && score_context == o.score_context && gates == o.gates;
  }
};

struct FusionShape {
  /// Adapter output width (Attention, Gated, and Sum/Product over unequal sources).
  std::size_t common_dim = 8;
  /// Hidden width p of the attention scorer.
  std::size_t attention_dim = 8;
  /// Output width of Linear and Pca.
  std::size_t out_dim = 8;
};

namespace detail {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double std_dev, RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = std_dev * rng.next_normal();
  return m;
}

inline Affine gaussian_affine(std::size_t in, std::size_t out, RngStream& rng) {
  return {gaussian_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng), Matrix(1, out)};
}

inline bool equal_dims(std::span<const std::size_t> dims) {
  return std::adjacent_find(dims.begin(), dims.end(), std::not_equal_to<>()) == dims.end();
}

inline void require_sources(const FusionParams& p, std::span<const Matrix> features) {
  if (features.size() != p.source_count()) {
    throw ContractError("fusion: expected " + std::to_string(p.source_count()) + " sources, got " +
                        std::to_string(features.size()));
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].cols() != p.source_dims[i]) {
      throw ContractError("fusion: source " + std::to_string(i) + " has " +
                          std::to_string(features[i].cols()) + " columns, expected " +
                          std::to_string(p.source_dims[i]));
    }
    if (features[i].rows() != features.front().rows()) {
      throw ContractError("fusion: row-count mismatch between sources");
    }
  }
}

}  // namespace detail

/// Fresh parameters for `kind`. Pca comes back unfitted; call pca_fit on training features.
inline FusionParams fusion_init(FusionKind kind, std::vector<std::size_t> source_dims,
                                const FusionShape& shape, RngStream& rng) {
  detail::require(!source_dims.empty(), "fusion_init: need at least one source");
  FusionParams p;
  p.kind = kind;
  p.source_dims = std::move(source_dims);
  const std::size_t m = p.source_count();
  const std::size_t total = std::accumulate(p.source_dims.begin(), p.source_dims.end(), std::size_t{0});
  auto make_adapters = [&] {
    p.common_dim = shape.common_dim;
    detail::require(p.common_dim >= 1, "fusion_init: common_dim must be >= 1");
    for (std::size_t d : p.source_dims) p.adapters.push_back(detail::gaussian_affine(d, p.common_dim, rng));
  };
  switch (kind) {
    case FusionKind::Concat:
    case FusionKind::Pca: break;
    case FusionKind::Sum:
    case FusionKind::Product:
      if (!detail::equal_dims(p.source_dims)) make_adapters();
      break;
    case FusionKind::Linear:
      detail::require(shape.out_dim >= 1, "fusion_init: out_dim must be >= 1");
      p.projection = detail::gaussian_affine(total, shape.out_dim, rng);
      break;
    case FusionKind::Attention:
      make_adapters();
      detail::require(shape.attention_dim >= 1, "fusion_init: attention_dim must be >= 1");
      p.score = detail::gaussian_affine(p.common_dim, shape.attention_dim, rng);
      p.score_context = detail::gaussian_matrix(
          shape.attention_dim, p.common_dim, 1.0 / std::sqrt(static_cast<double>(shape.attention_dim)), rng);
      break;
    case FusionKind::Gated:
      make_adapters();
      for (std::size_t i = 0; i < m; ++i) p.gates.push_back(detail::gaussian_affine(m * p.common_dim, p.common_dim, rng));
      break;
  }
  return p;
}

/// Concatenation of the sources' columns in source order.
inline Matrix fuse_concat(std::span<const Matrix> features) {
  detail::require(!features.empty(), "fuse_concat: need at least one source");
  return hconcat(features);
}

/// Coordinate-wise sum or product; sources must share a width.
inline Matrix fuse_elementwise(std::span<const Matrix> features, ElementwiseMode mode) {
  detail::require(!features.empty(), "fuse_elementwise: need at least one source");
  Matrix out = features.front();
  for (std::size_t i = 1; i < features.size(); ++i) {
    if (features[i].rows() != out.rows() || features[i].cols() != out.cols()) {
      throw ContractError("fuse_elementwise: source " + std::to_string(i) + " is " +
                          shape_string(features[i]) + ", expected " + shape_string(out) +
                          " (configure adapters for unequal widths)");
    }
    out = mode == ElementwiseMode::Sum ? out + features[i] : hadamard(out, features[i]);
  }
  return out;
}

/// Fits Pca fusion on concatenated training features.
inline FusionParams pca_fit(const Matrix& x, std::size_t out_dim) {
  FusionParams p;
  p.kind = FusionKind::Pca;
  p.pca = pca_fit_matrix(x, out_dim);
  p.source_dims = {x.cols()};
  return p;
}

/// Pca fusion over several sources: fit on their concatenation.
inline void pca_fit_sources(FusionParams& params, std::span<const Matrix> features, std::size_t out_dim) {
  detail::require(params.kind == FusionKind::Pca, "pca_fit_sources: not a Pca fusion");
  params.pca = pca_fit_matrix(hconcat(features), out_dim);
}

/// Forward values plus everything backward needs.
struct FusionForward {
  Matrix fused;
  /// Attention weights (Attention) or gate values (Gated): one n×d_common matrix per source.
  std::vector<Matrix> aux;
  std::vector<Matrix> adapted;
  Matrix stacked;
  std::vector<Matrix> score_hidden;
};

inline FusionForward fusion_forward(const FusionParams& p, std::span<const Matrix> features) {
  detail::require_sources(p, features);
  const std::size_t m = p.source_count();
  FusionForward f;
  auto adapt = [&] {
    if (p.adapters.empty()) {
      f.adapted.assign(features.begin(), features.end());
    } else {
      for (std::size_t i = 0; i < m; ++i) f.adapted.push_back(p.adapters[i].apply(features[i]));
    }
  };
  switch (p.kind) {
    case FusionKind::Concat:
      f.fused = fuse_concat(features);
      break;
    case FusionKind::Sum:
    case FusionKind::Product:
      adapt();
      f.fused = fuse_elementwise(f.adapted, p.kind == FusionKind::Sum ? ElementwiseMode::Sum
                                                                      : ElementwiseMode::Product);
      break;
    case FusionKind::Linear:
      f.stacked = hconcat(features);
      f.fused = p.projection.apply(f.stacked);
      break;
    case FusionKind::Pca:
      f.fused = pca_transform(p.pca, hconcat(features));
      break;
    case FusionKind::Attention: {
      adapt();
      const std::size_t n = features.front().rows();
      std::vector<Matrix> scores;
      for (std::size_t i = 0; i < m; ++i) {
        Matrix t = p.score.apply(f.adapted[i]);
        for (double& v : t.values()) v = std::tanh(v);
        scores.push_back(matmul(t, p.score_context));
        f.score_hidden.push_back(std::move(t));
      }
      f.aux.assign(m, Matrix(n, p.common_dim));
      f.fused = Matrix(n, p.common_dim);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < p.common_dim; ++k) {
          double mx = scores[0](r, k);
          for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, scores[i](r, k));
          double total = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double e = std::exp(scores[i](r, k) - mx);
            f.aux[i](r, k) = e;
            total += e;
          }
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            f.aux[i](r, k) /= total;
            acc += f.aux[i](r, k) * f.adapted[i](r, k);
          }
          f.fused(r, k) = acc;
        }
      }
      break;
    }
    case FusionKind::Gated: {
      adapt();
      const std::size_t n = features.front().rows();
      f.stacked = hconcat(f.adapted);
      f.fused = Matrix(n, p.common_dim);
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        Matrix g = p.gates[i].apply(f.stacked);
        for (double& v : g.values()) v = 1.0 / (1.0 + std::exp(-v));
        auto out = f.fused.values();
        const auto gv = g.values();
        const auto hv = f.adapted[i].values();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += inv_m * gv[j] * hv[j];
        f.aux.push_back(std::move(g));
      }
      break;
    }
  }
  return f;
}

struct FusionBackward {
  /// Same shapes as the parameters; only trainable() tensors are meaningful.
  FusionParams grads;
  std::vector<Matrix> feature_grads;
};

namespace detail {

inline FusionParams zero_like(const FusionParams& p) {
  FusionParams g = p;
  for (Matrix* t : g.trainable()) t->fill(0.0);
  return g;
}

inline std::vector<Matrix> split_cols(const Matrix& m, std::span<const std::size_t> widths) {
  std::vector<Matrix> out;
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    out.push_back(select_cols(m, offset, offset + w));
    offset += w;
  }
  return out;
}

}  // namespace detail

/// Exact gradients of the forward map given dLoss/dfused.
inline FusionBackward fusion_backward(const FusionParams& p, std::span<const Matrix> features,
                                      const FusionForward& f, const Matrix& upstream) {
  detail::require_sources(p, features);
  detail::require(upstream.rows() == f.fused.rows() && upstream.cols() == f.fused.cols(),
                  "fusion_backward: upstream gradient shape mismatch");
  const std::size_t m = p.source_count();
  FusionBackward b;
  b.grads = detail::zero_like(p);
  std::vector<Matrix> adapted_grads;  // dLoss/dh_i

  switch (p.kind) {
    case FusionKind::Concat:
      b.feature_grads = detail::split_cols(upstream, p.source_dims);
      return b;
    case FusionKind::Pca:
      b.feature_grads = detail::split_cols(matmul_nt(upstream, p.pca.components), p.source_dims);
      return b;
    case FusionKind::Linear:
      b.grads.projection.weight = matmul_tn(f.stacked, upstream);
      b.grads.projection.bias = column_sums(upstream);
      b.feature_grads = detail::split_cols(matmul_nt(upstream, p.projection.weight), p.source_dims);
      return b;
    case FusionKind::Sum:
      adapted_grads.assign(m, upstream);
      break;
    case FusionKind::Product:
      for (std::size_t i = 0; i < m; ++i) {
        Matrix g = upstream;
        for (std::size_t j = 0; j < m; ++j)
          if (j != i) g = hadamard(g, f.adapted[j]);
        adapted_grads.push_back(std::move(g));
      }
      break;
    case FusionKind::Attention: {
      const std::size_t n = upstream.rows();
      const std::size_t dc = p.common_dim;
      std::vector<Matrix> score_grads(m, Matrix(n, dc));
      adapted_grads.assign(m, Matrix(n, dc));
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < dc; ++k) {
          const double g = upstream(r, k);
          double mean_dalpha = 0.0;
          for (std::size_t i = 0; i < m; ++i) mean_dalpha += f.aux[i](r, k) * g * f.adapted[i](r, k);
          for (std::size_t i = 0; i < m; ++i) {
            const double alpha = f.aux[i](r, k);
            const double dalpha = g * f.adapted[i](r, k);
            score_grads[i](r, k) = alpha * (dalpha - mean_dalpha);
            adapted_grads[i](r, k) = alpha * g;
          }
        }
      }
      for (std::size_t i = 0; i < m; ++i) {
        const Matrix& t = f.score_hidden[i];
        b.grads.score_context += matmul_tn(t, score_grads[i]);
        Matrix dz = matmul_nt(score_grads[i], p.score_context);
        auto dzv = dz.values();
        const auto tv = t.values();
        for (std::size_t j = 0; j < dzv.size(); ++j) dzv[j] *= 1.0 - tv[j] * tv[j];
        b.grads.score.weight += matmul_tn(f.adapted[i], dz);
        b.grads.score.bias += column_sums(dz);
        adapted_grads[i] += matmul_nt(dz, p.score.weight);
      }
      break;
    }
    case FusionKind::Gated: {
      const double inv_m = 1.0 / static_cast<double>(m);
      Matrix stacked_grad(f.stacked.rows(), f.stacked.cols());
      for (std::size_t i = 0; i < m; ++i) {
        const Matrix& gate = f.aux[i];
        Matrix dh = inv_m * hadamard(upstream, gate);
        Matrix dq = inv_m * hadamard(upstream, f.adapted[i]);
        auto dqv = dq.values();
        const auto gv = gate.values();
        for (std::size_t j = 0; j < dqv.size(); ++j) dqv[j] *= gv[j] * (1.0 - gv[j]);
        b.grads.gates[i].weight = matmul_tn(f.stacked, dq);
        b.grads.gates[i].bias = column_sums(dq);
        stacked_grad += matmul_nt(dq, p.gates[i].weight);
        adapted_grads.push_back(std::move(dh));
      }
      const std::vector<std::size_t> widths(m, p.common_dim);
      const auto parts = detail::split_cols(stacked_grad, widths);
      for (std::size_t i = 0; i < m; ++i) adapted_grads[i] += parts[i];
      break;
    }
  }

  if (p.adapters.empty()) {
    b.feature_grads = std::move(adapted_grads);
    return b;
  }
  for (std::size_t i = 0; i < m; ++i) {
    b.grads.adapters[i].weight = matmul_tn(features[i], adapted_grads[i]);
    b.grads.adapters[i].bias = column_sums(adapted_grads[i]);
    b.feature_grads.push_back(matmul_nt(adapted_grads[i], p.adapters[i].weight));
  }
  return b;
}

/// Mean Shannon entropy (nats) of the per-feature attention distributions over sources.
inline double mean_attention_entropy(const FusionForward& f) {
  if (f.aux.empty() || f.aux.front().empty()) return 0.0;
  const std::size_t cells = f.aux.front().size();
  double total = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    for (const auto& a : f.aux) {
      const double v = a.values()[c];
      if (v > 0.0) total -= v * std::log(v);
    }
  }
  return total / static_cast<double>(cells);
}

/// Mean gate value over every source, row and coordinate.
inline double mean_gate_openness(const FusionForward& f) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& g : f.aux) {
    for (double v : g.values()) total += v;
    count += g.size();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace adafuse
