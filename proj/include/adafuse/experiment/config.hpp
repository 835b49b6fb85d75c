#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/rng.hpp>
#include <adafuse/data/csv.hpp>
#include <adafuse/data/generators.hpp>
#include <adafuse/ensemble/plan.hpp>
#include <adafuse/eval/metrics.hpp>
#include <adafuse/selection/search.hpp>

#include <json.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace adafuse {

using Json = nlohmann::json;

namespace detail {

/// Walks one JSON object, remembering which keys were read so leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ParseError("config: missing required key '" + child(key) + "'");
    return j_.at(key);
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_number_unsigned()) type_error(key, "a non-negative integer");
    return v.get<std::size_t>();
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_number_unsigned()) type_error(key, "a non-negative integer");
    return v.get<std::uint64_t>();
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_number()) type_error(key, "a number");
    return v.get<double>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) type_error(key, "true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_string()) type_error(key, "a string");
    return v.get<std::string>();
  }

  std::string text(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) type_error(key, "a string");
    return v.get<std::string>();
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_array()) type_error(key, "a list of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) type_error(key, "a list of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  /// Parses an enum through its parse_* function; the error names the key.
  template <class Parse>
  auto choice(const std::string& key, decltype(std::declval<Parse>()(std::string_view{})) fallback, Parse parse) {
    if (!has(key)) return fallback;
    const std::string s = text(key);
    try {
      return parse(s);
    } catch (const ContractError& e) {
      throw ParseError("config: '" + child(key) + "': " + e.what());
    }
  }

  ObjectReader object(const std::string& key) { return ObjectReader(raw(key), child(key)); }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ParseError("config: unknown key '" + child(key) + "'");
    }
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("config: '" + (path_.empty() ? std::string("<root>") : path_) + "' " + what);
  }
  [[noreturn]] void type_error(const std::string& key, const char* expected) const {
    throw ParseError("config: '" + child(key) + "' must be " + expected);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

struct DatasetSpec {
  /// multiview_xor, two_moons, gaussians or csv.
  std::string source = "multiview_xor";
  std::size_t n = 1000;
  std::size_t view_dim = 5;
  double noise = 0.1;
  std::size_t n_per_class = 100;
  std::vector<std::vector<double>> centers;
  double sigma = 0.3;
  /// Gaussians only: class of center c is labels[c]; default is c.
  std::vector<std::size_t> labels;
  /// Generator seed; defaults to the master seed.
  std::optional<std::uint64_t> seed;
  std::string path;
  LabelColumn label_column = std::string("label");
  bool header = true;
  std::optional<std::vector<ViewSpan>> views;
};

struct SearchSpec {
  std::string mode = "grid";
  std::size_t n_trials = 0;
  std::size_t folds = 5;
  SearchSpace space;
  Json space_json;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  bool standardize = true;
  TrainPlan plan;
  std::optional<SearchSpec> search;
  std::vector<std::string> compare_arms;
  std::string metric = "accuracy";
  std::uint64_t master_seed = 0;
  std::string output_dir = "out";
  /// Directory of the config file; relative CSV paths resolve against it.
  std::string base_dir = ".";
};

inline const std::vector<std::string>& default_compare_arms() {
  static const std::vector<std::string> arms{"single", "bagging", "stacking", "concat",
                                             "sum",    "product", "attention", "gated"};
  return arms;
}

// --- TrainPlan <-> JSON --------------------------------------------------------------

inline Json plan_to_json(const TrainPlan& p) {
  Json j;
  j["strategy"] = to_string(p.strategy);
  j["ensemble_size"] = p.ensemble_size;
  j["base"] = to_string(p.base);
  j["diversity"] = to_string(p.diversity);
  j["views"] = to_string(p.views);
  j["folds"] = p.folds;
  j["vote"] = to_string(p.vote);
  j["fusion"] = to_string(p.fusion);
  j["fusion_shape"] = {{"common_dim", p.fusion_shape.common_dim},
                       {"attention_dim", p.fusion_shape.attention_dim},
                       {"out_dim", p.fusion_shape.out_dim}};
  j["mlp"] = {{"hidden_dims", p.mlp.hidden_dims},
              {"activation", to_string(p.mlp.activation)},
              {"epochs", p.mlp.epochs},
              {"batch_size", p.mlp.batch_size},
              {"learning_rate", p.mlp.learning_rate},
              {"beta1", p.mlp.beta1},
              {"beta2", p.mlp.beta2},
              {"adam_eps", p.mlp.adam_eps},
              {"l2", p.mlp.l2}};
  j["meta"] = {{"epochs", p.meta.epochs},
               {"batch_size", p.meta.batch_size},
               {"learning_rate", p.meta.learning_rate},
               {"l2", p.meta.l2},
               {"patience", p.meta.patience}};
  return j;
}

inline TrainPlan plan_from_json(const Json& j, const std::string& path = "plan") {
  detail::ObjectReader r(j, path);
  TrainPlan p;
  p.strategy = r.choice("strategy", p.strategy, parse_strategy);
  p.ensemble_size = r.count("ensemble_size", p.ensemble_size);
  p.base = r.choice("base", p.base, parse_base_kind);
  p.diversity = r.choice("diversity", p.diversity, parse_diversity);
  p.views = r.choice("views", p.views, parse_view_mode);
  p.folds = r.count("folds", p.folds);
  p.vote = r.choice("vote", p.vote, parse_vote_mode);
  p.fusion = r.choice("fusion", p.fusion, parse_fusion_kind);
  if (r.has("fusion_shape")) {
    auto f = r.object("fusion_shape");
    p.fusion_shape.common_dim = f.count("common_dim", p.fusion_shape.common_dim);
    p.fusion_shape.attention_dim = f.count("attention_dim", p.fusion_shape.attention_dim);
    p.fusion_shape.out_dim = f.count("out_dim", p.fusion_shape.out_dim);
    f.finish();
  }
  if (r.has("mlp")) {
    auto m = r.object("mlp");
    p.mlp.hidden_dims = m.counts("hidden_dims", p.mlp.hidden_dims);
    p.mlp.activation = m.choice("activation", p.mlp.activation, parse_activation);
    p.mlp.epochs = m.count("epochs", p.mlp.epochs);
    p.mlp.batch_size = m.count("batch_size", p.mlp.batch_size);
    p.mlp.learning_rate = m.number("learning_rate", p.mlp.learning_rate);
    p.mlp.beta1 = m.number("beta1", p.mlp.beta1);
    p.mlp.beta2 = m.number("beta2", p.mlp.beta2);
    p.mlp.adam_eps = m.number("adam_eps", p.mlp.adam_eps);
    p.mlp.l2 = m.number("l2", p.mlp.l2);
    m.finish();
  }
  if (r.has("meta")) {
    auto m = r.object("meta");
    p.meta.epochs = m.count("epochs", p.meta.epochs);
    p.meta.batch_size = m.count("batch_size", p.meta.batch_size);
    p.meta.learning_rate = m.number("learning_rate", p.meta.learning_rate);
    p.meta.l2 = m.number("l2", p.meta.l2);
    p.meta.patience = m.count("patience", p.meta.patience);
    m.finish();
  }
  r.finish();
  try {
    p.validate();
  } catch (const ContractError& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return p;
}

/// Sets a dotted plan field ("fusion", "mlp.learning_rate", ...) from a search value.
/// "mlp.hidden_dims" takes an integer (one hidden layer) or a string like "16,8".
inline TrainPlan apply_configuration(const TrainPlan& base, const Configuration& c) {
  Json j = plan_to_json(base);
  for (std::size_t d = 0; d < c.names.size(); ++d) {
    const std::string& name = c.names[d];
    Json value = param_to_json(c.values[d]);
    if (name == "mlp.hidden_dims") {
      if (value.is_number_unsigned()) {
        value = Json::array({value});
      } else if (value.is_string()) {
        Json dims = Json::array();
        std::string s = value.get<std::string>();
        std::size_t start = 0;
        while (start <= s.size()) {
          const std::size_t comma = std::min(s.find(',', start), s.size());
          std::size_t width = 0;
          if (!detail::parse_index(detail::trim(std::string_view(s).substr(start, comma - start)), width)) {
            throw ParseError("search: bad mlp.hidden_dims value \"" + s + "\"");
          }
          dims.push_back(width);
          start = comma + 1;
        }
        value = dims;
      }
    }
    Json* slot = &j;
    std::size_t start = 0;
    for (std::size_t dot = name.find('.'); ; dot = name.find('.', start)) {
      const std::string key = name.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!slot->is_object() || !slot->contains(key)) throw ParseError("search: unknown plan field '" + name + "'");
      slot = &(*slot)[key];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (slot->is_object()) throw ParseError("search: '" + name + "' is a section, not a field");
    *slot = value;
  }
  return plan_from_json(j, "plan (search configuration)");
}

// --- dataset source ------------------------------------------------------------------------

inline Json dataset_to_json(const DatasetSpec& d) {
  Json j;
  j["source"] = d.source;
  if (d.source == "multiview_xor") {
    j["n"] = d.n;
    j["view_dim"] = d.view_dim;
    j["noise"] = d.noise;
  } else if (d.source == "two_moons") {
    j["n"] = d.n;
    j["noise"] = d.noise;
  } else if (d.source == "gaussians") {
    j["n_per_class"] = d.n_per_class;
    j["centers"] = d.centers;
    j["sigma"] = d.sigma;
    if (!d.labels.empty()) j["labels"] = d.labels;
  } else {
    j["path"] = d.path;
    if (const auto* name = std::get_if<std::string>(&d.label_column)) {
      j["label_column"] = *name;
    } else {
      j["label_column"] = std::get<std::size_t>(d.label_column);
    }
    j["header"] = d.header;
    if (d.views) {
      Json v = Json::array();
      for (const auto& s : *d.views) v.push_back({s.begin, s.end});
      j["views"] = v;
    }
  }
  if (d.seed) j["seed"] = *d.seed;
  return j;
}

inline DatasetSpec dataset_from_json(const Json& j) {
  detail::ObjectReader r(j, "dataset");
  DatasetSpec d;
  d.source = r.text("source");
  if (d.source == "multiview_xor") {
    d.n = r.count("n", d.n);
    d.view_dim = r.count("view_dim", d.view_dim);
    d.noise = r.number("noise", d.noise);
  } else if (d.source == "two_moons") {
    d.n = r.count("n", 400);
    d.noise = r.number("noise", 0.3);
  } else if (d.source == "gaussians") {
    d.n_per_class = r.count("n_per_class", d.n_per_class);
    d.sigma = r.number("sigma", d.sigma);
    const Json& c = r.raw("centers");
    if (!c.is_array() || c.empty()) throw ParseError("config: 'dataset.centers' must be a non-empty list of points");
    for (const auto& row : c) {
      if (!row.is_array() || row.empty()) throw ParseError("config: 'dataset.centers' rows must be lists of numbers");
      std::vector<double> pt;
      for (const auto& v : row) {
        if (!v.is_number()) throw ParseError("config: 'dataset.centers' rows must be lists of numbers");
        pt.push_back(v.get<double>());
      }
      if (pt.size() != c[0].size()) throw ParseError("config: 'dataset.centers' rows differ in length");
      d.centers.push_back(pt);
    }
    d.labels = r.counts("labels", {});
    if (!d.labels.empty() && d.labels.size() != d.centers.size()) {
      throw ParseError("config: 'dataset.labels' needs one label per center");
    }
  } else if (d.source == "csv") {
    d.path = r.text("path");
    if (r.has("label_column")) {
      const Json& l = r.raw("label_column");
      if (l.is_string()) {
        d.label_column = l.get<std::string>();
      } else if (l.is_number_unsigned()) {
        d.label_column = l.get<std::size_t>();
      } else {
        throw ParseError("config: 'dataset.label_column' must be a column name or index");
      }
    }
    d.header = r.boolean("header", true);
    if (r.has("views")) {
      const Json& v = r.raw("views");
      std::vector<ViewSpan> spans;
      if (!v.is_array()) throw ParseError("config: 'dataset.views' must be a list of [begin, end] pairs");
      for (const auto& s : v) {
        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned()) {
          throw ParseError("config: 'dataset.views' must be a list of [begin, end] pairs");
        }
        spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
      }
      d.views = spans;
    }
  } else {
    throw ParseError("config: 'dataset.source' must be one of multiview_xor, two_moons, gaussians, csv (got '" +
                     d.source + "')");
  }
  if (r.has("seed")) d.seed = r.u64("seed", 0);
  r.finish();
  return d;
}

/// Builds or loads the full dataset described by a DatasetSpec.
inline Dataset load_dataset(const DatasetSpec& d, std::uint64_t master_seed, const std::string& base_dir) {
  const std::uint64_t seed = d.seed.value_or(master_seed);
  Dataset ds;
  if (d.source == "multiview_xor") {
    ds = make_multiview_xor(d.n, d.view_dim, d.noise, seed);
  } else if (d.source == "two_moons") {
    ds = make_two_moons(d.n, d.noise, seed);
  } else if (d.source == "gaussians") {
    Matrix centers(d.centers.size(), d.centers.front().size());
    for (std::size_t c = 0; c < d.centers.size(); ++c)
      for (std::size_t j = 0; j < centers.cols(); ++j) centers(c, j) = d.centers[c][j];
    ds = make_gaussians(d.n_per_class, centers, d.sigma, seed);
    if (!d.labels.empty()) {
      std::size_t k = 0;
      for (std::size_t l : d.labels) k = std::max(k, l + 1);
      for (auto& y : ds.y) y = d.labels[y];
      ds.class_count = k;
      ds.class_names = default_class_names(k);
      ds.validate();
      for (std::size_t c = 0; c < k; ++c) {
        if (std::find(d.labels.begin(), d.labels.end(), c) == d.labels.end()) {
          throw ContractError("dataset: labels leave class " + std::to_string(c) + " empty");
        }
      }
    }
  } else {
    std::filesystem::path p(d.path);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    ds = load_csv(p.string(), d.label_column, d.header);
    if (d.views) {
      ds.view_spans = d.views;
      ds.validate();
    }
  }
  return ds;
}

// --- whole config ------------------------------------------------------------------------

inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["dataset"] = dataset_to_json(c.dataset);
  j["split"] = {{"train", c.split[0]}, {"val", c.split[1]}, {"test", c.split[2]}};
  j["standardize"] = c.standardize;
  j["plan"] = plan_to_json(c.plan);
  if (c.search) {
    Json s{{"mode", c.search->mode}, {"folds", c.search->folds}, {"space", c.search->space_json}};
    if (c.search->mode == "random") s["n_trials"] = c.search->n_trials;
    j["search"] = s;
  }
  if (c.compare_arms != default_compare_arms()) j["compare"] = {{"arms", c.compare_arms}};
  j["metric"] = c.metric;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j, const std::string& base_dir = ".") {
  detail::ObjectReader r(j, "");
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.dataset = dataset_from_json(r.raw("dataset"));
  if (r.has("split")) {
    auto s = r.object("split");
    c.split = {s.number("train", 0.6), s.number("val", 0.2), s.number("test", 0.2)};
    s.finish();
    const double total = c.split[0] + c.split[1] + c.split[2];
    if (c.split[0] <= 0 || c.split[1] <= 0 || c.split[2] <= 0 || std::abs(total - 1.0) > 1e-9) {
      throw ParseError("config: 'split' fractions must be positive and sum to 1");
    }
  }
  c.standardize = r.boolean("standardize", c.standardize);
  if (r.has("plan")) c.plan = plan_from_json(r.raw("plan"));
  if (r.has("search")) {
    auto s = r.object("search");
    SearchSpec spec;
    spec.mode = s.text("mode", spec.mode);
    if (spec.mode != "grid" && spec.mode != "random") {
      throw ParseError("config: 'search.mode' must be grid or random (got '" + spec.mode + "')");
    }
    spec.folds = s.count("folds", spec.folds);
    if (spec.folds < 2) throw ParseError("config: 'search.folds' must be >= 2");
    spec.space_json = s.raw("space");
    spec.space = space_from_json(spec.space_json);
    if (spec.mode == "random") {
      spec.n_trials = s.count("n_trials", 0);
      if (spec.n_trials < 1 || spec.n_trials > spec.space.grid_size()) {
        throw ParseError("config: 'search.n_trials' must be in [1, " + std::to_string(spec.space.grid_size()) +
                         "]");
      }
    }
    s.finish();
    // every configuration must map onto the plan
    const std::size_t probes = std::min<std::size_t>(spec.space.grid_size(), 64);
    for (std::size_t i = 0; i < probes; ++i) apply_configuration(c.plan, spec.space.configuration(i));
    for (const auto& dim : spec.space.dimensions) {
      for (std::size_t v = 0; v < dim.values.size(); ++v) {
        Configuration one{{dim.name}, {dim.values[v]}, {v}};
        apply_configuration(c.plan, one);
      }
    }
    c.search = std::move(spec);
  }
  c.compare_arms = default_compare_arms();
  if (r.has("compare")) {
    auto cmp = r.object("compare");
    if (cmp.has("arms")) {
      const Json& arms = cmp.raw("arms");
      if (!arms.is_array() || arms.empty()) throw ParseError("config: 'compare.arms' must be a non-empty list");
      c.compare_arms.clear();
      for (const auto& a : arms) {
        const auto& known = default_compare_arms();
        if (!a.is_string() || std::find(known.begin(), known.end(), a.get<std::string>()) == known.end()) {
          throw ParseError("config: unknown compare arm " + a.dump());
        }
        c.compare_arms.push_back(a.get<std::string>());
      }
    }
    cmp.finish();
  }
  c.metric = r.text("metric", c.metric);
  try {
    require_metric(c.metric);
  } catch (const ContractError& e) {
    throw ParseError(std::string("config: 'metric': ") + e.what());
  }
  c.master_seed = r.u64("master_seed", c.master_seed);
  c.output_dir = r.text("output_dir", c.output_dir);
  r.finish();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return config_from_json(j, dir.empty() ? "." : dir.string());
}

}  // namespace adafuse
