#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adafuse {

/// Half-open column range [begin, end) belonging to one view of a multi-view dataset.
struct ViewSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t width() const noexcept { return end - begin; }
  bool operator==(const ViewSpan&) const = default;
};

/// Feature matrix plus integer class labels in [0, class_count).
struct Dataset {
  Matrix x;
  std::vector<std::size_t> y;
  std::size_t class_count = 0;
  std::optional<std::vector<ViewSpan>> view_spans;
  std::vector<std::string> feature_names;
  /// Original label spelling per class index, when the data came from a file.
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const noexcept { return x.cols(); }

  void validate() const {
    if (x.rows() != y.size()) {
      throw ContractError("Dataset: " + std::to_string(x.rows()) + " rows but " +
                          std::to_string(y.size()) + " labels");
    }
    if (class_count < 2) throw ContractError("Dataset: class_count must be >= 2");
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] >= class_count) {
        throw ContractError("Dataset: label " + std::to_string(y[i]) + " at row " +
                            std::to_string(i) + " >= class_count " + std::to_string(class_count));
      }
    }
    if (view_spans) {
      std::size_t expected = 0;
      for (const auto& v : *view_spans) {
        if (v.begin != expected || v.end <= v.begin) {
          throw ContractError("Dataset: view spans must be ordered, disjoint and non-empty");
        }
        expected = v.end;
      }
      if (expected != x.cols()) throw ContractError("Dataset: view spans do not cover all columns");
    }
    if (!feature_names.empty() && feature_names.size() != x.cols()) {
      throw ContractError("Dataset: feature_names length mismatch");
    }
  }

  /// Rows at `indices` (repeats allowed); metadata carried over.
  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.x = select_rows(x, indices);
    out.y.reserve(indices.size());
    for (std::size_t i : indices) out.y.push_back(y[i]);
    out.class_count = class_count;
    out.view_spans = view_spans;
    out.feature_names = feature_names;
    out.class_names = class_names;
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (std::size_t label : y) ++counts[label];
    return counts;
  }
};

inline std::vector<std::string> default_feature_names(std::size_t d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

inline std::vector<std::string> default_class_names(std::size_t k) {
  std::vector<std::string> names;
  names.reserve(k);
  for (std::size_t c = 0; c < k; ++c) names.push_back(std::to_string(c));
  return names;
}

}  // namespace adafuse
