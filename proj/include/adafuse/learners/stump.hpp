#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace adafuse {

/// One-split tree: x[feature] <= threshold goes left.
struct DecisionStump {
  std::size_t feature_index = 0;
  double threshold = 0.0;
  std::size_t left_class = 0;
  std::size_t right_class = 0;
  std::size_t class_count = 2;
  double weighted_error = 0.0;
  /// Set when no split exists (all rows identical) or both sides predict one class.
  bool constant = false;

  std::size_t predict_one(std::span<const double> row) const {
    return row[feature_index] <= threshold ? left_class : right_class;
  }

  bool operator==(const DecisionStump&) const = default;
};

namespace detail {

inline std::size_t weighted_majority(std::span<const double> class_weight) {
  return argmax(class_weight);
}

}  // namespace detail

/// Exhaustive scan over every feature and every midpoint between consecutive distinct
/// sorted values; each side predicts its weighted-majority class (lowest class on ties).
/// The lowest weighted error wins; ties keep the lowest feature, then the lowest threshold.
inline DecisionStump stump_fit(const Matrix& x, std::span<const std::size_t> y,
                               std::size_t class_count, std::span<const double> weights) {
  const std::size_t n = x.rows();
  detail::require(n > 0, "stump_fit: empty input");
  detail::require(y.size() == n && weights.size() == n, "stump_fit: length mismatch");
  detail::require(class_count >= 2, "stump_fit: class_count must be >= 2");
  std::vector<double> totals(class_count, 0.0);
  double total_w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(y[i] < class_count, "stump_fit: label out of range");
    detail::require(weights[i] >= 0.0, "stump_fit: negative weight");
    totals[y[i]] += weights[i];
    total_w += weights[i];
  }
  detail::require(total_w > 0.0, "stump_fit: weights must have a positive sum");

  DecisionStump best;
  best.class_count = class_count;
  const std::size_t majority = detail::weighted_majority(totals);
  best.left_class = best.right_class = majority;
  best.threshold = n > 0 ? x(0, 0) : 0.0;
  best.weighted_error = (total_w - totals[majority]) / total_w;
  best.constant = true;
  bool found_split = false;

  constexpr double kTieTolerance = 1e-12;
  std::vector<std::size_t> order(n);
  std::vector<double> left(class_count);
  std::vector<double> right(class_count);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x(a, j) < x(b, j); });
    std::fill(left.begin(), left.end(), 0.0);
    double left_w = 0.0;
    for (std::size_t pos = 0; pos + 1 < n; ++pos) {
      const std::size_t i = order[pos];
      left[y[i]] += weights[i];
      left_w += weights[i];
      const double lo = x(i, j);
      const double hi = x(order[pos + 1], j);
      if (!(lo < hi)) continue;
      for (std::size_t c = 0; c < class_count; ++c) right[c] = totals[c] - left[c];
      const std::size_t lc = detail::weighted_majority(left);
      const std::size_t rc = detail::weighted_majority(right);
      const double err = ((left_w - left[lc]) + ((total_w - left_w) - right[rc])) / total_w;
      if (!found_split || err < best.weighted_error - kTieTolerance) {
        double thr = lo + (hi - lo) / 2.0;
        if (!(thr < hi)) thr = lo;
        best.feature_index = j;
        best.threshold = thr;
        best.left_class = lc;
        best.right_class = rc;
        best.weighted_error = std::max(0.0, err);
        best.constant = lc == rc;
        found_split = true;
      }
    }
  }
  return best;
}

inline std::vector<std::size_t> stump_predict(const DecisionStump& stump, const Matrix& x) {
  detail::require(stump.feature_index < x.cols(), "stump_predict: feature index out of range");
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = stump.predict_one(x.row(i));
  return out;
}

}  // namespace adafuse
