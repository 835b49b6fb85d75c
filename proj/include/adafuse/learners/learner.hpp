#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>
#include <adafuse/learners/mlp.hpp>
#include <adafuse/learners/stump.hpp>

#include <span>
#include <variant>
#include <vector>

namespace adafuse {

/// Always predicts the weighted-majority training class.
struct MajorityClass {
  std::size_t label = 0;
  std::size_t class_count = 2;

  bool operator==(const MajorityClass&) const = default;
};

inline MajorityClass majority_fit(std::span<const std::size_t> y, std::size_t class_count,
                                  std::span<const double> weights) {
  detail::require(y.size() == weights.size() && !y.empty(), "majority_fit: bad input");
  std::vector<double> totals(class_count, 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) totals[y[i]] += weights[i];
  return {argmax(totals), class_count};
}

using Learner = std::variant<MlpModel, DecisionStump, MajorityClass>;

inline std::size_t learner_class_count(const Learner& learner) {
  return std::visit([](const auto& l) { return l.class_count; }, learner);
}

namespace detail {

inline Matrix one_hot(std::span<const std::size_t> labels, std::size_t class_count) {
  Matrix out(labels.size(), class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) out(i, labels[i]) = 1.0;
  return out;
}

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

}  // namespace detail

/// Class probabilities: softmax of logits for an MLP, one-hot for the others.
inline Matrix learner_predict_proba(const Learner& learner, const Matrix& x) {
  return std::visit(
      detail::overloaded{
          [&](const MlpModel& m) { return mlp_predict_proba(m, x); },
          [&](const DecisionStump& s) { return detail::one_hot(stump_predict(s, x), s.class_count); },
          [&](const MajorityClass& m) {
            std::vector<std::size_t> labels(x.rows(), m.label);
            return detail::one_hot(labels, m.class_count);
          },
      },
      learner);
}

inline std::vector<std::size_t> learner_predict(const Learner& learner, const Matrix& x) {
  if (const auto* s = std::get_if<DecisionStump>(&learner)) return stump_predict(*s, x);
  return argmax_rows(learner_predict_proba(learner, x));
}

/// Penultimate activations; only MLP learners expose features for fusion.
inline Matrix learner_features(const Learner& learner, const Matrix& x) {
  const auto* m = std::get_if<MlpModel>(&learner);
  if (!m) throw ContractError("learner_features: only MLP base learners expose features");
  return mlp_forward(*m, x).penultimate;
}

inline std::size_t learner_feature_dim(const Learner& learner) {
  const auto* m = std::get_if<MlpModel>(&learner);
  if (!m) throw ContractError("learner_feature_dim: only MLP base learners expose features");
  return m->layers.size() == 1 ? m->input_dim : m->layers.back().weight.rows();
}

}  // namespace adafuse
