#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/params.hpp>
#include <adafuse/data/dataset.hpp>
#include <adafuse/fusion/fusion.hpp>
#include <adafuse/learners/learner.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace adafuse {

enum class Strategy { Bagging, AdaBoost, Stacking, Adaptive };
enum class BaseKind { Mlp, Stump, Majority };
enum class Diversity { Bootstrap, SeedOnly };
enum class ViewMode { All, PerView };
enum class VoteMode { Average, Majority };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Bagging: return "bagging";
    case Strategy::AdaBoost: return "adaboost";
    case Strategy::Stacking: return "stacking";
    case Strategy::Adaptive: return "adaptive";
  }
  return "?";
}
inline std::string_view to_string(BaseKind k) {
  switch (k) {
    case BaseKind::Mlp: return "mlp";
    case BaseKind::Stump: return "stump";
    case BaseKind::Majority: return "majority";
  }
  return "?";
}
inline std::string_view to_string(Diversity d) { return d == Diversity::Bootstrap ? "bootstrap" : "seed_only"; }
inline std::string_view to_string(ViewMode v) { return v == ViewMode::All ? "all" : "per_view"; }
inline std::string_view to_string(VoteMode v) { return v == VoteMode::Average ? "average" : "majority"; }
inline std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

namespace detail {

template <class E, std::size_t N>
E parse_enum(std::string_view name, const E (&values)[N], const char* what) {
  for (E v : values)
    if (to_string(v) == name) return v;
  std::string allowed;
  for (E v : values) allowed += (allowed.empty() ? "" : ", ") + std::string(to_string(v));
  throw ContractError(std::string("unknown ") + what + " '" + std::string(name) + "' (expected one of " +
                      allowed + ")");
}

}  // namespace detail

inline Strategy parse_strategy(std::string_view s) {
  constexpr Strategy all[] = {Strategy::Bagging, Strategy::AdaBoost, Strategy::Stacking, Strategy::Adaptive};
  return detail::parse_enum(s, all, "strategy");
}
inline BaseKind parse_base_kind(std::string_view s) {
  constexpr BaseKind all[] = {BaseKind::Mlp, BaseKind::Stump, BaseKind::Majority};
  return detail::parse_enum(s, all, "base learner");
}
inline Diversity parse_diversity(std::string_view s) {
  constexpr Diversity all[] = {Diversity::Bootstrap, Diversity::SeedOnly};
  return detail::parse_enum(s, all, "diversity");
}
inline ViewMode parse_view_mode(std::string_view s) {
  constexpr ViewMode all[] = {ViewMode::All, ViewMode::PerView};
  return detail::parse_enum(s, all, "view mode");
}
inline VoteMode parse_vote_mode(std::string_view s) {
  constexpr VoteMode all[] = {VoteMode::Average, VoteMode::Majority};
  return detail::parse_enum(s, all, "vote mode");
}
inline Activation parse_activation(std::string_view s) {
  constexpr Activation all[] = {Activation::Relu, Activation::Tanh};
  return detail::parse_enum(s, all, "activation");
}

/// Meta-level optimizer settings: the stacking head and the adaptive fusion + head.
struct MetaConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  double l2 = 0.0;
  /// Adaptive only: epochs without a validation-accuracy improvement before stopping.
  std::size_t patience = 10;

  void validate() const {
    detail::require(epochs >= 1, "meta: epochs must be >= 1");
    detail::require(batch_size >= 1, "meta: batch_size must be >= 1");
    detail::require(learning_rate > 0.0, "meta: learning_rate must be > 0");
    detail::require(l2 >= 0.0, "meta: l2 must be >= 0");
    detail::require(patience >= 1, "meta: patience must be >= 1");
  }
};

struct TrainPlan {
  Strategy strategy = Strategy::Bagging;
  /// Members for bagging/stacking/adaptive; maximum rounds for AdaBoost.
  std::size_t ensemble_size = 5;
  BaseKind base = BaseKind::Mlp;
  /// Seed field is ignored: member i uses derive_seed(master_seed, i).
  MlpConfig mlp;
  FusionKind fusion = FusionKind::Attention;
  FusionShape fusion_shape;
  MetaConfig meta;
  Diversity diversity = Diversity::Bootstrap;
  /// PerView: member i trains on view (i mod V) of a dataset with view spans.
  ViewMode views = ViewMode::All;
  std::size_t folds = 5;
  VoteMode vote = VoteMode::Average;
  std::uint64_t master_seed = 0;

  void validate() const {
    detail::require(ensemble_size >= 1, "plan: ensemble_size must be >= 1");
    mlp.validate();
    meta.validate();
    detail::require(folds >= 2, "plan: folds must be >= 2");
    if (strategy == Strategy::Adaptive) {
      detail::require(base == BaseKind::Mlp, "plan: adaptive ensembles need MLP base learners");
    }
  }
};

/// Seed-stream layout under one master seed.
namespace streams {
inline constexpr std::uint64_t kBootstrap = 1000;  // + member index
inline constexpr std::uint64_t kFolds = 2000;
inline constexpr std::uint64_t kMeta = 3000;
inline constexpr std::uint64_t kMetaShuffle = 3001;
}  // namespace streams

struct BaseMember {
  Learner learner;
  /// Input columns this member reads; empty means all columns.
  std::optional<ViewSpan> view;
  /// Training rows (with repeats) when bootstrapped.
  std::vector<std::size_t> bootstrap_indices;
  /// AdaBoost vote weight and round error.
  double alpha = 0.0;
  double error = 0.0;
  std::uint64_t seed = 0;
};

struct EnsembleModel {
  Strategy strategy = Strategy::Bagging;
  std::size_t class_count = 0;
  std::size_t input_dim = 0;
  std::vector<BaseMember> members;
  std::optional<FusionParams> fusion;
  /// Adaptive: fused features -> logits. Stacking: concatenated member probabilities -> logits.
  std::optional<Affine> meta_head;
  VoteMode vote = VoteMode::Average;
  std::uint64_t master_seed = 0;
  std::vector<std::string> warnings;
};

/// The columns of x a member reads.
inline Matrix member_input(const BaseMember& m, const Matrix& x) {
  if (!m.view) return x;
  detail::require(m.view->end <= x.cols(), "member_input: view exceeds input columns");
  return select_cols(x, m.view->begin, m.view->end);
}

/// View assigned to member i under the plan's view mode.
inline std::optional<ViewSpan> member_view(const TrainPlan& plan, const Dataset& ds, std::size_t i) {
  if (plan.views == ViewMode::All) return std::nullopt;
  if (!ds.view_spans || ds.view_spans->empty()) {
    throw ContractError("plan: per_view base learners need a dataset with view spans");
  }
  return (*ds.view_spans)[i % ds.view_spans->size()];
}

}  // namespace adafuse
