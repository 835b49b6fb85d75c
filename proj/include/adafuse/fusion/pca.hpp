#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace adafuse {

struct SymmetricEigen {
  std::vector<double> values;  ///< descending
  Matrix vectors;              ///< column k pairs with values[k]
};

/// Cyclic Jacobi rotations on a symmetric matrix. Eigenvalues sorted descending;
/// each eigenvector's largest-magnitude entry (first on ties) is made positive.
inline SymmetricEigen symmetric_eigen(Matrix a) {
  detail::require(a.rows() == a.cols(), "symmetric_eigen: matrix must be square");
  const std::size_t n = a.rows();
  Matrix v = Matrix::identity(n);

  double scale = 0.0;
  for (double x : a.values()) scale += x * x;
  const double tol = 1e-30 * std::max(scale, 1e-300);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= tol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.values.push_back(a(src, src));
    std::size_t big = 0;
    for (std::size_t r = 1; r < n; ++r)
      if (std::abs(v(r, src)) > std::abs(v(big, src))) big = r;
    const double sign = v(big, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = sign * v(r, src);
  }
  return out;
}

struct PcaModel {
  Matrix mean;        ///< 1×D
  Matrix components;  ///< D×out_dim, orthonormal columns
  std::vector<double> eigenvalues;  ///< sample-covariance eigenvalues of the kept components
};

/// Principal components of the mean-centered sample covariance of x.
inline PcaModel pca_fit_matrix(const Matrix& x, std::size_t out_dim) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (out_dim == 0 || out_dim > std::min(n, d)) {
    throw ContractError("pca_fit: out_dim " + std::to_string(out_dim) + " must be in [1, min(n=" +
                        std::to_string(n) + ", D=" + std::to_string(d) + ")]");
  }
  PcaModel model;
  model.mean = column_sums(x);
  for (double& m : model.mean.values()) m /= static_cast<double>(n);
  Matrix centered = x;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered(i, j) -= model.mean(0, j);
  Matrix cov = matmul_tn(centered, centered);
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (double& c : cov.values()) c /= denom;
  for (std::size_t i = 0; i < d; ++i)  // exact symmetry
    for (std::size_t j = i + 1; j < d; ++j) cov(j, i) = cov(i, j);

  SymmetricEigen eig = symmetric_eigen(std::move(cov));
  model.components = select_cols(eig.vectors, 0, out_dim);
  model.eigenvalues.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(out_dim));
  return model;
}

inline Matrix pca_transform(const PcaModel& model, const Matrix& x) {
  detail::require(x.cols() == model.components.rows(), "pca_transform: dimension mismatch");
  Matrix centered = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) centered(i, j) -= model.mean(0, j);
  return matmul(centered, model.components);
}

}  // namespace adafuse
