#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adafuse {

/// K×K counts, rows = true class, cols = predicted class.
struct Confusion {
  std::size_t k = 0;
  std::vector<std::size_t> counts;

  Confusion() = default;
  explicit Confusion(std::size_t classes) : k(classes), counts(classes * classes, 0) {}

  std::size_t& at(std::size_t t, std::size_t p) { return counts[t * k + p]; }
  std::size_t at(std::size_t t, std::size_t p) const { return counts[t * k + p]; }

  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
  std::size_t trace() const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < k; ++c) s += at(c, c);
    return s;
  }

  bool operator==(const Confusion&) const = default;
};

inline Confusion confusion_matrix(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                  std::size_t k) {
  detail::require(k >= 1, "confusion_matrix: class count must be >= 1");
  detail::require(y_true.size() == y_pred.size(),
                  "confusion_matrix: length mismatch (" + std::to_string(y_true.size()) + " true vs " +
                      std::to_string(y_pred.size()) + " predicted)");
  Confusion cm(k);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] >= k || y_pred[i] >= k) {
      throw ContractError("confusion_matrix: label out of range at sample " + std::to_string(i) + " (K=" +
                          std::to_string(k) + ")");
    }
    ++cm.at(y_true[i], y_pred[i]);
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrfMetrics {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  /// One entry per 0/0 replaced by 0, e.g. "class 2 precision".
  std::vector<std::string> undefined;
};

inline PrfMetrics prf_metrics(const Confusion& cm) {
  detail::require(cm.total() > 0, "prf_metrics: empty confusion matrix");
  PrfMetrics out;
  auto ratio = [&](double num, double den, std::size_t c, const char* what) {
    if (den == 0.0) {
      out.undefined.push_back("class " + std::to_string(c) + " " + what);
      return 0.0;
    }
    return num / den;
  };
  for (std::size_t c = 0; c < cm.k; ++c) {
    double tp = static_cast<double>(cm.at(c, c)), predicted = 0.0, actual = 0.0;
    for (std::size_t o = 0; o < cm.k; ++o) {
      predicted += static_cast<double>(cm.at(o, c));
      actual += static_cast<double>(cm.at(c, o));
    }
    ClassMetrics m;
    m.precision = ratio(tp, predicted, c, "precision");
    m.recall = ratio(tp, actual, c, "recall");
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall, c, "f1");
    out.per_class.push_back(m);
  }
  const double k = static_cast<double>(cm.k);
  for (const auto& m : out.per_class) {
    out.macro_precision += m.precision;
    out.macro_recall += m.recall;
    out.macro_f1 += m.f1;
  }
  out.macro_precision /= k;
  out.macro_recall /= k;
  out.macro_f1 /= k;
  return out;
}

/// Mann-Whitney AUC via midranks. Labels must be 0/1 with both present.
inline double auc_roc(std::span<const std::size_t> y_true, std::span<const double> scores) {
  detail::require(y_true.size() == scores.size(), "auc_roc: length mismatch");
  const std::size_t n = y_true.size();
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(y_true[i] <= 1, "auc_roc: labels must be binary (0/1)");
    detail::require(!std::isnan(scores[i]), "auc_roc: NaN score at sample " + std::to_string(i));
    n_pos += static_cast<double>(y_true[i]);
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw ContractError("auc_roc: undefined with a single class present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are 1-based; a tie block [i, j) gets rank (i + j + 1) / 2.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = static_cast<double>(i + j + 1) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (y_true[order[t]] == 1) pos_rank_sum += midrank;
    }
    i = j;
  }
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct MetricsReport {
  Confusion confusion;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> auc_roc;
  std::size_t sample_count = 0;
  std::vector<std::string> undefined;
  std::vector<std::string> class_names;
};

/// Report from hard predictions; AUC is filled when binary scores are given.
inline MetricsReport make_report(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                 std::size_t k, std::optional<std::span<const double>> positive_scores = {}) {
  MetricsReport r;
  r.confusion = confusion_matrix(y_true, y_pred, k);
  r.sample_count = y_true.size();
  detail::require(r.sample_count > 0, "metrics: no samples");
  r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(r.sample_count);
  PrfMetrics prf = prf_metrics(r.confusion);
  r.per_class = std::move(prf.per_class);
  r.macro_precision = prf.macro_precision;
  r.macro_recall = prf.macro_recall;
  r.macro_f1 = prf.macro_f1;
  r.undefined = std::move(prf.undefined);
  if (positive_scores && k == 2) {
    bool both = false;
    for (std::size_t i = 1; i < y_true.size() && !both; ++i) both = y_true[i] != y_true[0];
    if (both) {
      r.auc_roc = auc_roc(y_true, *positive_scores);
    } else {
      r.undefined.push_back("auc_roc (single class present)");
    }
  }
  return r;
}

/// Argmax predictions (ties to the lower class); AUC from column 1 when K = 2.
inline MetricsReport evaluate_probabilities(const Matrix& probs, std::span<const std::size_t> y_true) {
  detail::require(probs.rows() == y_true.size(),
                  "evaluate: " + std::to_string(probs.rows()) + " probability rows for " +
                      std::to_string(y_true.size()) + " labels");
  const std::size_t k = probs.cols();
  const std::vector<std::size_t> pred = argmax_rows(probs);
  if (k != 2) return make_report(y_true, pred, k);
  std::vector<double> pos(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) pos[r] = probs(r, 1);
  return make_report(y_true, pred, k, std::span<const double>(pos));
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["sample_count"] = r.sample_count;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["auc_roc"] = r.auc_roc ? nlohmann::json(*r.auc_roc) : nlohmann::json(nullptr);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t < r.confusion.k; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < r.confusion.k; ++p) row.push_back(r.confusion.at(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const std::string name = c < r.class_names.size() ? r.class_names[c] : std::to_string(c);
    per.push_back({{"class", name},
                   {"precision", r.per_class[c].precision},
                   {"recall", r.per_class[c].recall},
                   {"f1", r.per_class[c].f1}});
  }
  j["per_class"] = per;
  j["undefined"] = r.undefined;
  return j;
}

namespace detail {

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace detail

/// Fixed-layout markdown: headline table, per-class table, confusion matrix.
inline std::string report_to_markdown(const MetricsReport& r, const std::string& title) {
  using detail::fixed4;
  std::string md = "# " + title + "\n\n";
  md += "| metric | value |\n|---|---|\n";
  md += "| samples | " + std::to_string(r.sample_count) + " |\n";
  md += "| accuracy | " + fixed4(r.accuracy) + " |\n";
  md += "| macro precision | " + fixed4(r.macro_precision) + " |\n";
  md += "| macro recall | " + fixed4(r.macro_recall) + " |\n";
  md += "| macro F1 | " + fixed4(r.macro_f1) + " |\n";
  md += "| AUC-ROC | " + (r.auc_roc ? fixed4(*r.auc_roc) : std::string("n/a")) + " |\n\n";
  md += "| class | precision | recall | F1 |\n|---|---|---|---|\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const std::string name = c < r.class_names.size() ? r.class_names[c] : std::to_string(c);
    md += "| " + name + " | " + fixed4(r.per_class[c].precision) + " | " + fixed4(r.per_class[c].recall) +
          " | " + fixed4(r.per_class[c].f1) + " |\n";
  }
  md += "\nConfusion (rows true, columns predicted):\n\n|   |";
  for (std::size_t p = 0; p < r.confusion.k; ++p) md += " " + std::to_string(p) + " |";
  md += "\n|---|";
  for (std::size_t p = 0; p < r.confusion.k; ++p) md += "---|";
  md += "\n";
  for (std::size_t t = 0; t < r.confusion.k; ++t) {
    md += "| " + std::to_string(t) + " |";
    for (std::size_t p = 0; p < r.confusion.k; ++p) md += " " + std::to_string(r.confusion.at(t, p)) + " |";
    md += "\n";
  }
  if (!r.undefined.empty()) {
    md += "\nUndefined (reported as 0):";
    for (const auto& u : r.undefined) md += " " + u + ";";
    md.pop_back();
    md += "\n";
  }
  return md;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"accuracy", "macro_f1", "macro_precision", "macro_recall", "auc_roc"};
  return names;
}

inline void require_metric(const std::string& name) {
  const auto& names = metric_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string allowed;
    for (const auto& n : names) allowed += (allowed.empty() ? "" : ", ") + n;
    throw ContractError("unknown metric '" + name + "' (expected one of " + allowed + ")");
  }
}

inline double metric_value(const MetricsReport& r, const std::string& name) {
  require_metric(name);
  if (name == "accuracy") return r.accuracy;
  if (name == "macro_f1") return r.macro_f1;
  if (name == "macro_precision") return r.macro_precision;
  if (name == "macro_recall") return r.macro_recall;
  if (!r.auc_roc) throw ContractError("metric auc_roc is unavailable (needs binary labels with both classes)");
  return *r.auc_roc;
}

}  // namespace adafuse
