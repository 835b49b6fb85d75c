#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/rng.hpp>
#include <adafuse/data/dataset.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

namespace adafuse {

/// Class c is drawn from N(centers.row(c), sigma^2 I); rows are grouped by class.
inline Dataset make_gaussians(std::size_t n_per_class, const Matrix& centers, double sigma,
                              std::uint64_t seed) {
  const std::size_t k = centers.rows();
  if (k < 2) throw ContractError("make_gaussians: need at least 2 centers, got " + std::to_string(k));
  detail::require(sigma >= 0.0, "make_gaussians: sigma must be >= 0");
  const std::size_t d = centers.cols();
  RngStream rng = derive_stream(seed, 0);

  Dataset ds;
  ds.x = Matrix(k * n_per_class, d);
  ds.y.resize(k * n_per_class);
  ds.class_count = k;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t r = c * n_per_class + i;
      ds.y[r] = c;
      for (std::size_t j = 0; j < d; ++j) {
        const double z = rng.next_normal();
        ds.x(r, j) = sigma == 0.0 ? centers(c, j) : centers(c, j) + sigma * z;
      }
    }
  }
  ds.feature_names = default_feature_names(d);
  ds.class_names = default_class_names(k);
  return ds;
}

/// Two interleaved half circles: class 0 on the upper unit arc, class 1 on the
/// shifted lower arc (1 - cos t, 0.5 - sin t), t evenly spaced over [0, pi].
inline Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n % 2 != 0) throw ContractError("make_two_moons: n must be even, got " + std::to_string(n));
  detail::require(n >= 2, "make_two_moons: n must be >= 2");
  const std::size_t half = n / 2;
  RngStream rng = derive_stream(seed, 0);

  Dataset ds;
  ds.x = Matrix(n, 2);
  ds.y.resize(n);
  ds.class_count = 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double t =
        half == 1 ? 0.0 : std::numbers::pi * static_cast<double>(i) / static_cast<double>(half - 1);
    ds.x(i, 0) = std::cos(t);
    ds.x(i, 1) = std::sin(t);
    ds.y[i] = 0;
    ds.x(half + i, 0) = 1.0 - std::cos(t);
    ds.x(half + i, 1) = 0.5 - std::sin(t);
    ds.y[half + i] = 1;
  }
  if (noise > 0.0) {
    for (double& v : ds.x.values()) v += noise * rng.next_normal();
  }
  ds.feature_names = default_feature_names(2);
  ds.class_names = default_class_names(2);
  return ds;
}

/// Two views of view_dim columns each. Label = bit0 XOR bit1, and view v only sees
/// bit v encoded as (2*bit - 1) * direction_v + noise, so each view alone is
/// independent of the label. Labels are exactly balanced.
inline Dataset make_multiview_xor(std::size_t n, std::size_t view_dim, double noise,
                                  std::uint64_t seed) {
  if (n % 2 != 0) throw ContractError("make_multiview_xor: n must be even, got " + std::to_string(n));
  detail::require(view_dim >= 1, "make_multiview_xor: view_dim must be >= 1");
  RngStream dir_rng = derive_stream(seed, 0);
  RngStream label_rng = derive_stream(seed, 1);
  RngStream bit_rng = derive_stream(seed, 2);
  RngStream noise_rng = derive_stream(seed, 3);

  std::vector<Matrix> directions;
  for (int v = 0; v < 2; ++v) {
    Matrix dir(1, view_dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : dir.values()) {
        x = dir_rng.next_normal();
        norm += x * x;
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : dir.values()) x /= norm;
    directions.push_back(std::move(dir));
  }

  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 0 : 1;
  label_rng.shuffle(std::span<std::size_t>(labels));

  Dataset ds;
  ds.x = Matrix(n, 2 * view_dim);
  ds.y = labels;
  ds.class_count = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bit0 = bit_rng.next_u64() >> 63;
    const std::size_t bits[2] = {bit0, bit0 ^ labels[i]};
    for (std::size_t v = 0; v < 2; ++v) {
      const double sign = bits[v] == 1 ? 1.0 : -1.0;
      for (std::size_t j = 0; j < view_dim; ++j) {
        ds.x(i, v * view_dim + j) = sign * directions[v](0, j) + noise * noise_rng.next_normal();
      }
    }
  }
  ds.view_spans = std::vector<ViewSpan>{{0, view_dim}, {view_dim, 2 * view_dim}};
  ds.feature_names = default_feature_names(2 * view_dim);
  ds.class_names = default_class_names(2);
  return ds;
}

}  // namespace adafuse
