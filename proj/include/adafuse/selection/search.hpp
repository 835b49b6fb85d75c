#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/parallel.hpp>
#include <adafuse/core/rng.hpp>
#include <adafuse/data/transforms.hpp>
#include <adafuse/ensemble/train.hpp>
#include <adafuse/eval/evaluate.hpp>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace adafuse {

/// A candidate value: integer count, float, or enum tag.
using ParamValue = std::variant<std::int64_t, double, std::string>;

inline nlohmann::json param_to_json(const ParamValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v); i && *i >= 0) return static_cast<std::uint64_t>(*i);
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

inline ParamValue param_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw ParseError("search value must be an integer, float or string, got " + j.dump());
}

inline std::string param_to_string(const ParamValue& v) { return param_to_json(v).dump(); }

struct Dimension {
  std::string name;
  std::vector<ParamValue> values;
};

/// One point of the grid. indices[d] is the position of values[d] in dimension d.
struct Configuration {
  std::vector<std::string> names;
  std::vector<ParamValue> values;
  std::vector<std::size_t> indices;

  const ParamValue& at(const std::string& name) const {
    for (std::size_t d = 0; d < names.size(); ++d)
      if (names[d] == name) return values[d];
    throw ContractError("configuration has no dimension '" + name + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t d = 0; d < names.size(); ++d) j[names[d]] = param_to_json(values[d]);
    return j;
  }

  std::string label() const {
    std::string s;
    for (std::size_t d = 0; d < names.size(); ++d) {
      s += (d ? ", " : "") + names[d] + "=" + param_to_string(values[d]);
    }
    return s;
  }
};

struct SearchSpace {
  std::vector<Dimension> dimensions;

  void validate() const {
    detail::require(!dimensions.empty(), "search space: no dimensions");
    std::set<std::string> seen;
    for (const auto& d : dimensions) {
      detail::require(!d.values.empty(), "search space: dimension '" + d.name + "' has no values");
      detail::require(seen.insert(d.name).second, "search space: duplicate dimension '" + d.name + "'");
    }
  }

  std::size_t grid_size() const {
    std::size_t n = 1;
    for (const auto& d : dimensions) {
      if (n > std::numeric_limits<std::size_t>::max() / d.values.size()) {
        throw ContractError("search space: grid size overflows");
      }
      n *= d.values.size();
    }
    return n;
  }

  /// Mixed-radix decode; the last dimension varies fastest, so flat order is lexicographic.
  Configuration configuration(std::size_t flat) const {
    detail::require(flat < grid_size(), "search space: configuration index out of range");
    Configuration c;
    c.names.resize(dimensions.size());
    c.values.resize(dimensions.size());
    c.indices.resize(dimensions.size());
    for (std::size_t d = dimensions.size(); d-- > 0;) {
      const auto& dim = dimensions[d];
      c.indices[d] = flat % dim.values.size();
      flat /= dim.values.size();
      c.names[d] = dim.name;
      c.values[d] = dim.values[c.indices[d]];
    }
    return c;
  }
};

inline SearchSpace space_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("search space must be an object of name -> list of values");
  SearchSpace s;
  for (const auto& [name, values] : j.items()) {
    if (!values.is_array()) throw ParseError("search dimension '" + name + "' must be a list");
    Dimension d{name, {}};
    for (const auto& v : values) d.values.push_back(param_from_json(v));
    s.dimensions.push_back(std::move(d));
  }
  try {
    s.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what());
  }
  return s;
}

/// Stratified folds shared by every trial of one search, with a digest of their contents.
struct CvFolds {
  std::vector<std::vector<std::size_t>> folds;
  std::string hash;
};

namespace detail {

inline std::string fnv1a_hex(std::span<const std::vector<std::size_t>> groups) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 1099511628211ull;
    }
  };
  for (const auto& g : groups) {
    mix(g.size());
    for (std::size_t i : g) mix(i);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

inline CvFolds make_cv_folds(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  CvFolds cv;
  cv.folds = kfold_indices(ds.size(), k, std::span<const std::size_t>(ds.y), seed);
  cv.hash = detail::fnv1a_hex(cv.folds);
  return cv;
}

struct CvResult {
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> fold_scores;
  std::string fold_hash;
};

/// Score of a model trained on `train` and measured on `holdout`.
using FoldScorer = std::function<double(const Dataset& train, const Dataset& holdout, std::uint64_t seed)>;

inline CvResult cross_validate(const FoldScorer& score, const Dataset& ds, const CvFolds& cv, std::uint64_t seed) {
  CvResult r;
  r.fold_hash = cv.hash;
  for (const auto& fold : cv.folds) {
    const auto rest = complement_indices(ds.size(), fold);
    r.fold_scores.push_back(score(ds.subset(rest), ds.subset(fold), seed));
  }
  const double k = static_cast<double>(r.fold_scores.size());
  for (double s : r.fold_scores) r.mean += s;
  r.mean /= k;
  double var = 0.0;
  for (double s : r.fold_scores) var += (s - r.mean) * (s - r.mean);
  r.std = std::sqrt(var / k);
  return r;
}

inline CvResult cross_validate(const FoldScorer& score, const Dataset& ds, std::size_t k, std::uint64_t seed) {
  return cross_validate(score, ds, make_cv_folds(ds, k, seed), seed);
}

using PlanBuilder = std::function<TrainPlan(const Configuration&)>;

/// Adaptive plans carve a stratified fifth of the training rows out for early stopping.
inline EnsembleModel fit_plan(TrainPlan plan, const Dataset& train, std::uint64_t seed, std::size_t threads = 1,
                              const Dataset* val = nullptr) {
  plan.master_seed = seed;
  plan.validate();
  if (plan.strategy != Strategy::Adaptive || val) return train_ensemble(plan, train, val, threads);
  const auto inner = kfold_indices(train.size(), 5, std::span<const std::size_t>(train.y), seed);
  const Dataset inner_val = train.subset(inner[0]);
  const Dataset inner_train = train.subset(complement_indices(train.size(), inner[0]));
  return train_ensemble(plan, inner_train, &inner_val, threads);
}

/// Standard fold scorer: build the plan, train, evaluate `metric` on the held-out fold.
inline FoldScorer plan_scorer(TrainPlan plan, const std::string& metric, std::size_t threads = 1) {
  require_metric(metric);
  return [plan, metric, threads](const Dataset& train, const Dataset& holdout, std::uint64_t seed) {
    return metric_value(evaluate_model(fit_plan(plan, train, seed, threads), holdout), metric);
  };
}

using TrialScorer = std::function<FoldScorer(const Configuration&)>;

inline TrialScorer plan_trial_scorer(PlanBuilder builder, const std::string& metric) {
  require_metric(metric);
  return [builder = std::move(builder), metric](const Configuration& c) { return plan_scorer(builder(c), metric); };
}

struct TrialResult {
  Configuration configuration;
  std::size_t flat_index = 0;
  double cv_mean = std::numeric_limits<double>::quiet_NaN();
  double cv_std = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> fold_scores;
  double wall_time = 0.0;
  std::uint64_t seed = 0;
  std::string fold_hash;
  std::optional<std::string> error;

  bool failed() const { return error.has_value() || std::isnan(cv_mean); }
};

/// Successful trials first by cv_mean desc, cv_std asc, then grid position; failures last.
inline bool trial_before(const TrialResult& a, const TrialResult& b) {
  if (a.failed() != b.failed()) return !a.failed();
  if (!a.failed()) {
    if (a.cv_mean != b.cv_mean) return a.cv_mean > b.cv_mean;
    if (a.cv_std != b.cv_std) return a.cv_std < b.cv_std;
  }
  return a.flat_index < b.flat_index;
}

inline void rank_trials(std::vector<TrialResult>& trials) { std::stable_sort(trials.begin(), trials.end(), trial_before); }

namespace detail {

inline constexpr std::uint64_t kSearchFoldStream = 0;
inline constexpr std::uint64_t kRandomSearchStream = 0x5EA7C4;

inline std::vector<TrialResult> run_trials(const SearchSpace& space, std::span<const std::size_t> flat_indices,
                                           const TrialScorer& scorer, const Dataset& ds, std::size_t k,
                                           std::uint64_t seed, std::size_t threads) {
  const CvFolds cv = make_cv_folds(ds, k, derive_seed(seed, kSearchFoldStream));
  std::vector<TrialResult> trials(flat_indices.size());
  parallel_for(flat_indices.size(), threads, [&](std::size_t t) {
    TrialResult& r = trials[t];
    r.flat_index = flat_indices[t];
    r.configuration = space.configuration(r.flat_index);
    r.seed = derive_seed(seed, 1 + r.flat_index);
    r.fold_hash = cv.hash;
    const auto start = std::chrono::steady_clock::now();
    try {
      const CvResult cvr = cross_validate(scorer(r.configuration), ds, cv, r.seed);
      r.cv_mean = cvr.mean;
      r.cv_std = cvr.std;
      r.fold_scores = cvr.fold_scores;
      if (std::isnan(r.cv_mean)) r.error = "score is NaN";
    } catch (const std::exception& e) {
      r.error = e.what();
      r.cv_mean = r.cv_std = std::numeric_limits<double>::quiet_NaN();
      r.fold_scores.clear();
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  rank_trials(trials);
  return trials;
}

}  // namespace detail

inline std::vector<TrialResult> grid_search(const SearchSpace& space, const TrialScorer& scorer, const Dataset& ds,
                                            std::size_t k, std::uint64_t seed, std::size_t threads = 1) {
  space.validate();
  std::vector<std::size_t> all(space.grid_size());
  std::iota(all.begin(), all.end(), 0);
  return detail::run_trials(space, all, scorer, ds, k, seed, threads);
}

/// n distinct grid positions drawn uniformly (Floyd's algorithm), in draw order.
inline std::vector<std::size_t> sample_grid_indices(std::size_t grid, std::size_t n, std::uint64_t seed) {
  detail::require(n >= 1 && n <= grid, "random search: n_trials must be in [1, " + std::to_string(grid) + "]");
  RngStream rng = derive_stream(seed, detail::kRandomSearchStream);
  std::set<std::size_t> chosen;
  std::vector<std::size_t> order;
  for (std::size_t j = grid - n; j < grid; ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.next_index(j + 1));
    const std::size_t pick = chosen.count(t) ? j : t;
    chosen.insert(pick);
    order.push_back(pick);
  }
  return order;
}

inline std::vector<TrialResult> random_search(const SearchSpace& space, std::size_t n_trials,
                                              const TrialScorer& scorer, const Dataset& ds, std::size_t k,
                                              std::uint64_t seed, std::size_t threads = 1) {
  space.validate();
  const auto picks = sample_grid_indices(space.grid_size(), n_trials, seed);
  return detail::run_trials(space, picks, scorer, ds, k, seed, threads);
}

struct FinalSelection {
  Configuration configuration;
  EnsembleModel model;
  double val_score = 0.0;
  std::uint64_t seed = 0;
};

/// Retrains the top-ranked configuration on all of `train` and scores it on `val`.
inline FinalSelection select_final(const std::vector<TrialResult>& ranked, const PlanBuilder& builder,
                                   const Dataset& train, const Dataset& val, const std::string& metric,
                                   std::size_t threads = 1) {
  require_metric(metric);
  if (ranked.empty() || ranked.front().failed()) throw TrainingError("select_final: every trial failed");
  FinalSelection out;
  out.configuration = ranked.front().configuration;
  out.seed = ranked.front().seed;
  out.model = fit_plan(builder(out.configuration), train, out.seed, threads, &val);
  out.val_score = metric_value(evaluate_model(out.model, val), metric);
  return out;
}

inline nlohmann::json trials_to_json(const std::vector<TrialResult>& trials, bool with_wall_time = true) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    nlohmann::json j;
    j["rank"] = i + 1;
    j["configuration"] = t.configuration.to_json();
    j["grid_index"] = t.flat_index;
    j["cv_mean"] = num(t.cv_mean);
    j["cv_std"] = num(t.cv_std);
    j["fold_scores"] = t.fold_scores;
    j["seed"] = t.seed;
    j["fold_hash"] = t.fold_hash;
    j["error"] = t.error ? nlohmann::json(*t.error) : nlohmann::json(nullptr);
    if (with_wall_time) j["wall_time"] = t.wall_time;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace adafuse
