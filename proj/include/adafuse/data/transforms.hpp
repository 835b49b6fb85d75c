#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/rng.hpp>
#include <adafuse/data/dataset.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace adafuse {

/// Per-column standardization fitted on training rows.
struct Scaler {
  std::vector<double> means;
  /// Population std, or exactly 1.0 for columns whose raw std is below 1e-12 (centered only).
  std::vector<double> stds;

  bool operator==(const Scaler&) const = default;
};

inline constexpr double kScalerStdFloor = 1e-12;

inline Scaler standardize_fit(const Dataset& train) {
  detail::require(train.size() > 0, "standardize_fit: empty training set");
  const std::size_t n = train.size();
  const std::size_t d = train.dim();
  Scaler s;
  s.means.assign(d, 0.0);
  s.stds.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.means[j] += train.x(i, j);
  for (double& m : s.means) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = train.x(i, j) - s.means[j];
      s.stds[j] += c * c;
    }
  }
  for (double& v : s.stds) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < kScalerStdFloor) v = 1.0;
  }
  return s;
}

inline Dataset standardize_apply(const Scaler& scaler, const Dataset& ds) {
  detail::require(scaler.means.size() == ds.dim(), "standardize_apply: dimension mismatch");
  Dataset out = ds;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = out.x.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - scaler.means[j]) / scaler.stds[j];
  }
  return out;
}

/// Train/validation/test partition plus the source row indices of each part.
struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
  std::array<std::vector<std::size_t>, 3> indices;
};

namespace detail {

/// Splits `count` items into parts proportional to `fractions`: floors first, then the
/// remainder by largest fractional part (earlier part on ties), then every part gets >= 1.
inline std::vector<std::size_t> allocate_counts(std::size_t count, std::span<const double> fractions) {
  const std::size_t parts = fractions.size();
  std::vector<std::size_t> sizes(parts);
  std::vector<double> remainders(parts);
  std::size_t used = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const double exact = fractions[p] * static_cast<double>(count);
    sizes[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[p] = exact - static_cast<double>(sizes[p]);
    used += sizes[p];
  }
  std::vector<std::size_t> order(parts);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; used < count; ++k, ++used) ++sizes[order[k % parts]];
  for (std::size_t p = 0; p < parts; ++p) {
    if (sizes[p] == 0) {
      auto largest = std::max_element(sizes.begin(), sizes.end());
      --*largest;
      ++sizes[p];
    }
  }
  return sizes;
}

}  // namespace detail

/// Per-class shuffled split; each partition keeps its rows in ascending source order.
inline SplitResult stratified_split(const Dataset& ds, std::array<double, 3> fractions,
                                    std::uint64_t seed) {
  for (double f : fractions) detail::require(f > 0.0, "stratified_split: fractions must be positive");
  const double total = fractions[0] + fractions[1] + fractions[2];
  detail::require(std::abs(total - 1.0) <= 1e-9, "stratified_split: fractions must sum to 1");

  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.y[i]].push_back(i);

  SplitResult out;
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    auto& members = by_class[c];
    if (members.size() < 3) {
      throw ContractError("stratified_split: class " + std::to_string(c) + " has " +
                          std::to_string(members.size()) + " samples, need at least 3");
    }
    RngStream rng = derive_stream(seed, c);
    rng.shuffle(std::span<std::size_t>(members));
    const auto sizes = detail::allocate_counts(members.size(), fractions);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < 3; ++p) {
      out.indices[p].insert(out.indices[p].end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                            members.begin() + static_cast<std::ptrdiff_t>(offset + sizes[p]));
      offset += sizes[p];
    }
  }
  for (auto& idx : out.indices) std::sort(idx.begin(), idx.end());
  out.train = ds.subset(out.indices[0]);
  out.val = ds.subset(out.indices[1]);
  out.test = ds.subset(out.indices[2]);
  return out;
}

/// n uniform draws with replacement; the drawn source indices are returned alongside.
inline std::pair<Dataset, std::vector<std::size_t>> bootstrap_sample(const Dataset& ds,
                                                                     RngStream& stream) {
  if (ds.size() == 0) throw ContractError("bootstrap_sample: empty dataset");
  std::vector<std::size_t> chosen(ds.size());
  for (auto& c : chosen) c = static_cast<std::size_t>(stream.next_index(ds.size()));
  return {ds.subset(chosen), std::move(chosen)};
}

/// k disjoint folds covering [0, n), sizes within one of each other, each sorted ascending.
/// With labels, folds are stratified: each class is shuffled and dealt round-robin, so
/// per-fold class counts also differ by at most one.
inline std::vector<std::vector<std::size_t>> kfold_indices(
    std::size_t n, std::size_t k, std::optional<std::span<const std::size_t>> labels,
    std::uint64_t seed) {
  if (k < 2) throw ContractError("kfold_indices: k must be >= 2, got " + std::to_string(k));
  if (k > n) {
    throw ContractError("kfold_indices: k = " + std::to_string(k) + " exceeds n = " +
                        std::to_string(n));
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  if (labels) {
    detail::require(labels->size() == n, "kfold_indices: labels length mismatch");
    std::size_t classes = 0;
    for (std::size_t l : *labels) classes = std::max(classes, l + 1);
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < n; ++i) by_class[(*labels)[i]].push_back(i);
    for (std::size_t c = 0; c < classes; ++c) {
      auto& members = by_class[c];
      if (!members.empty() && members.size() < k) {
        throw ContractError("kfold_indices: class " + std::to_string(c) + " has " +
                            std::to_string(members.size()) + " samples, fewer than k = " +
                            std::to_string(k) + " folds");
      }
      RngStream rng = derive_stream(seed, c);
      rng.shuffle(std::span<std::size_t>(members));
      order.insert(order.end(), members.begin(), members.end());
    }
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    RngStream rng = derive_stream(seed, 0);
    rng.shuffle(std::span<std::size_t>(order));
  }
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t pos = 0; pos < order.size(); ++pos) folds[pos % k].push_back(order[pos]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Indices of [0, n) not in `fold` (fold must be sorted).
inline std::vector<std::size_t> complement_indices(std::size_t n, std::span<const std::size_t> fold) {
  std::vector<std::size_t> rest;
  rest.reserve(n - fold.size());
  std::size_t f = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (f < fold.size() && fold[f] == i) {
      ++f;
      continue;
    }
    rest.push_back(i);
  }
  return rest;
}

}  // namespace adafuse
