#pragma once

#include <adafuse/core/parallel.hpp>
#include <adafuse/data/csv.hpp>
#include <adafuse/data/transforms.hpp>
#include <adafuse/ensemble/serialize.hpp>
#include <adafuse/ensemble/train.hpp>
#include <adafuse/eval/evaluate.hpp>
#include <adafuse/experiment/config.hpp>
#include <adafuse/selection/search.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace adafuse {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kSplitSeedStream = 1;

/// Holds the three splits and logs every access; the test split can be sealed shut.
class AuditedSplits {
 public:
  AuditedSplits(SplitResult split, std::optional<Scaler> scaler)
      : split_(std::move(split)), scaler_(std::move(scaler)) {
    if (scaler_) {
      split_.train = standardize_apply(*scaler_, split_.train);
      split_.val = standardize_apply(*scaler_, split_.val);
    }
  }

  const Dataset& train(const std::string& purpose) { return touch("train", purpose, split_.train); }
  const Dataset& val(const std::string& purpose) { return touch("val", purpose, split_.val); }

  /// Standardization of the test rows happens lazily here, on the first sanctioned read.
  const Dataset& test(const std::string& purpose) {
    if (sealed_) throw ContractError("split audit: test split is sealed (attempted read for " + purpose + ")");
    if (scaler_ && !test_scaled_) {
      split_.test = standardize_apply(*scaler_, split_.test);
      test_scaled_ = true;
    }
    return touch("test", purpose, split_.test);
  }

  void seal_test() { sealed_ = true; }

  std::size_t size(int part) const { return split_.indices[static_cast<std::size_t>(part)].size(); }
  const std::vector<std::size_t>& indices(int part) const { return split_.indices[static_cast<std::size_t>(part)]; }

  std::size_t test_reads() const {
    std::size_t n = 0;
    for (const auto& e : log_) n += e["split"] == "test";
    return n;
  }

  Json log() const { return log_; }

 private:
  const Dataset& touch(const char* part, const std::string& purpose, const Dataset& ds) {
    log_.push_back({{"split", part}, {"purpose", purpose}});
    return ds;
  }

  SplitResult split_;
  std::optional<Scaler> scaler_;
  bool test_scaled_ = false;
  bool sealed_ = false;
  Json log_ = Json::array();
};

/// Digest of the test split's row indices and labels; equal across arms iff they saw the same rows.
inline std::string split_hash(const std::vector<std::size_t>& indices, const Dataset& ds) {
  std::vector<std::vector<std::size_t>> parts{indices, ds.y};
  return detail::fnv1a_hex(parts);
}

/// Files written by one command; on failure every one of them is deleted again.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    if (!fs::exists(dir_)) {
      std::error_code ec;
      fs::create_directories(dir_, ec);
      if (ec) throw Error("cannot create output directory '" + dir_.string() + "': " + ec.message());
      created_dir_ = true;
    }
    const fs::path path = dir_ / name;
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write '" + path.string() + "'");
      out << content;
      if (!out.flush()) throw Error("write failed for '" + path.string() + "'");
    }
    files_.push_back(path);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw Error("cannot write '" + path.string() + "'");
    }
  }

  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& f : files_) {
      fs::remove(f, ec);
      fs::remove(f.string() + ".tmp", ec);
    }
    files_.clear();
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  const fs::path& dir() const { return dir_; }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.filename().string());
    return out;
  }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_dir_ = false;
};

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::size_t threads = 1;
};

namespace detail {

struct Prepared {
  Dataset full;
  AuditedSplits splits;
  std::optional<Scaler> scaler;
  std::uint64_t split_seed = 0;
};

inline Prepared prepare(const ExperimentConfig& cfg) {
  Dataset full = load_dataset(cfg.dataset, cfg.master_seed, cfg.base_dir);
  full.validate();
  const std::uint64_t split_seed = derive_seed(cfg.master_seed, kSplitSeedStream);
  SplitResult split = stratified_split(full, cfg.split, split_seed);
  std::optional<Scaler> scaler;
  if (cfg.standardize) scaler = standardize_fit(split.train);
  AuditedSplits audited(std::move(split), scaler);
  return Prepared{std::move(full), std::move(audited), std::move(scaler), split_seed};
}

inline Json scaler_json(const std::optional<Scaler>& s) {
  if (!s) return nullptr;
  return {{"means", s->means}, {"stds", s->stds}};
}

inline Json manifest_base(const std::string& command, const ExperimentConfig& cfg, const Prepared& p) {
  Json m;
  m["command"] = command;
  m["master_seed"] = cfg.master_seed;
  m["dataset"] = dataset_to_json(cfg.dataset);
  m["dataset_seed"] = cfg.dataset.seed.value_or(cfg.master_seed);
  m["split"] = {{"train", cfg.split[0]}, {"val", cfg.split[1]}, {"test", cfg.split[2]}};
  m["split_seed"] = p.split_seed;
  m["split_sizes"] = {{"train", p.splits.size(0)}, {"val", p.splits.size(1)}, {"test", p.splits.size(2)}};
  m["class_count"] = p.full.class_count;
  m["feature_count"] = p.full.dim();
  if (p.full.view_spans) {
    Json v = Json::array();
    for (const auto& s : *p.full.view_spans) v.push_back({s.begin, s.end});
    m["view_spans"] = v;
  }
  return m;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline Json fusion_stats_json(const FusionStats& s) {
  Json j = Json::object();
  if (s.mean_attention_entropy) j["mean_attention_entropy"] = *s.mean_attention_entropy;
  if (s.mean_gate_openness) j["mean_gate_openness"] = *s.mean_gate_openness;
  return j;
}

}  // namespace detail

// --- generate --------------------------------------------------------------------------

inline int cmd_generate(const ExperimentConfig& cfg, OutputSet& out, std::ostream& log) {
  detail::Prepared p = detail::prepare(cfg);
  // raw (unstandardized) rows go to disk
  SplitResult raw;
  raw.train = p.full.subset(p.splits.indices(0));
  raw.val = p.full.subset(p.splits.indices(1));
  raw.test = p.full.subset(p.splits.indices(2));
  Json manifest = detail::manifest_base("generate", cfg, p);
  manifest["files"] = {"train.csv", "val.csv", "test.csv"};
  manifest["class_names"] = p.full.class_names;
  const std::string names[] = {"train.csv", "val.csv", "test.csv"};
  const Dataset* parts[] = {&raw.train, &raw.val, &raw.test};
  for (int i = 0; i < 3; ++i) {
    std::ostringstream content;
    write_csv(*parts[i], content);
    out.write(names[i], content.str());
  }
  out.write_json("manifest.json", manifest);
  log << "generate: wrote " << raw.train.size() << "/" << raw.val.size() << "/" << raw.test.size()
      << " rows to " << out.dir().string() << "\n";
  return 0;
}

// --- train -----------------------------------------------------------------------------

inline int cmd_train(const ExperimentConfig& cfg, OutputSet& out, std::size_t threads, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  detail::Prepared p = detail::prepare(cfg);
  TrainPlan plan = cfg.plan;
  plan.master_seed = cfg.master_seed;
  const Dataset& train = p.splits.train("fit");
  const Dataset& val = p.splits.val("fit");
  const EnsembleModel model = train_ensemble(plan, train, &val, threads);
  MetricsReport val_report = evaluate_model(model, p.splits.val("validation metrics"));
  const Dataset& test = p.splits.test("final evaluation");
  MetricsReport test_report = evaluate_model(model, test);

  Json metrics;
  metrics["strategy"] = to_string(plan.strategy);
  metrics["master_seed"] = cfg.master_seed;
  metrics["test"] = report_to_json(test_report);
  metrics["validation"] = report_to_json(val_report);
  metrics["test_split_hash"] = split_hash(p.splits.indices(2), test);
  if (plan.strategy == Strategy::Adaptive) metrics["fusion_stats"] = detail::fusion_stats_json(fusion_stats(model, test.x));
  metrics["warnings"] = model.warnings;

  Json manifest = detail::manifest_base("train", cfg, p);
  manifest["plan"] = plan_to_json(plan);
  manifest["scaler"] = detail::scaler_json(p.scaler);
  manifest["split_access"] = p.splits.log();
  manifest["wall_time"] = detail::seconds_since(start);

  out.write_json("model.json", model_to_json(model));
  out.write_json("metrics.json", metrics);
  out.write("report.md", report_to_markdown(test_report, std::string("Test metrics: ") +
                                                             std::string(to_string(plan.strategy))));
  out.write_json("manifest.json", manifest);
  log << "train: " << to_string(plan.strategy) << " test accuracy " << detail::fixed4(test_report.accuracy) << "\n";
  return 0;
}

// --- search ----------------------------------------------------------------------------

inline int cmd_search(const ExperimentConfig& cfg, OutputSet& out, std::size_t threads, std::ostream& log) {
  if (!cfg.search) throw ParseError("config: search needs a 'search' section");
  const auto start = std::chrono::steady_clock::now();
  detail::Prepared p = detail::prepare(cfg);
  p.splits.seal_test();
  const SearchSpec& spec = *cfg.search;
  const TrainPlan base = cfg.plan;
  PlanBuilder builder = [&base](const Configuration& c) { return apply_configuration(base, c); };
  const Dataset& train = p.splits.train("cross-validation");
  const TrialScorer scorer = plan_trial_scorer(builder, cfg.metric);
  const std::vector<TrialResult> trials =
      spec.mode == "grid" ? grid_search(spec.space, scorer, train, spec.folds, cfg.master_seed, threads)
                          : random_search(spec.space, spec.n_trials, scorer, train, spec.folds, cfg.master_seed,
                                          threads);
  const FinalSelection chosen =
      select_final(trials, builder, p.splits.train("final fit"), p.splits.val("selection score"), cfg.metric, threads);

  ExperimentConfig best = cfg;
  best.plan = apply_configuration(base, chosen.configuration);
  best.search.reset();
  best.output_dir = (fs::path(cfg.output_dir) / "best_train").string();
  if (best.dataset.source == "csv") {
    fs::path path(best.dataset.path);
    if (path.is_relative()) best.dataset.path = fs::absolute(fs::path(cfg.base_dir) / path).lexically_normal().string();
  }

  Json selection;
  selection["configuration"] = chosen.configuration.to_json();
  selection["metric"] = cfg.metric;
  selection["val_score"] = chosen.val_score;
  selection["seed"] = chosen.seed;
  selection["trials"] = trials.size();
  selection["failed_trials"] = std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.failed(); });

  Json manifest = detail::manifest_base("search", cfg, p);
  manifest["mode"] = spec.mode;
  manifest["folds"] = spec.folds;
  manifest["fold_hash"] = trials.empty() ? "" : trials.front().fold_hash;
  manifest["selection"] = selection;
  manifest["split_access"] = p.splits.log();
  manifest["test_reads"] = p.splits.test_reads();
  manifest["wall_time"] = detail::seconds_since(start);

  out.write_json("trials.json", trials_to_json(trials));
  out.write_json("best_config.json", config_to_json(best));
  out.write_json("manifest.json", manifest);
  log << "search: " << trials.size() << " trials, best " << chosen.configuration.label() << " (" << cfg.metric
      << " cv " << detail::fixed4(trials.front().cv_mean) << ", val " << detail::fixed4(chosen.val_score) << ")\n";
  return 0;
}

// --- compare ---------------------------------------------------------------------------

struct ArmRow {
  std::string arm;
  bool ok = false;
  std::string error;
  std::optional<MetricsReport> report;
  Json aux = Json::object();
  double wall_time = 0.0;
};

namespace detail {

inline std::optional<FusionKind> arm_fusion(const std::string& arm) {
  if (arm == "concat") return FusionKind::Concat;
  if (arm == "sum") return FusionKind::Sum;
  if (arm == "product") return FusionKind::Product;
  if (arm == "attention") return FusionKind::Attention;
  if (arm == "gated") return FusionKind::Gated;
  return std::nullopt;
}

inline std::string markdown_table(const std::vector<ArmRow>& rows, const std::string& hash) {
  std::string md = "# Comparison\n\nTest split hash: `" + hash + "`\n\n";
  md += "| arm | status | accuracy | macro F1 | macro precision | macro recall | AUC-ROC | aux |\n";
  md += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    md += "| " + r.arm + " | " + (r.ok ? "ok" : "failed") + " | ";
    if (r.ok) {
      const auto& m = *r.report;
      md += fixed4(m.accuracy) + " | " + fixed4(m.macro_f1) + " | " + fixed4(m.macro_precision) + " | " +
            fixed4(m.macro_recall) + " | " + (m.auc_roc ? fixed4(*m.auc_roc) : "n/a") + " | ";
      std::string aux;
      for (const auto& [k, v] : r.aux.items()) {
        if (!v.is_number_float()) continue;
        aux += (aux.empty() ? "" : ", ") + k + " " + fixed4(v.get<double>());
      }
      md += aux + " |\n";
    } else {
      std::string msg = r.error;
      for (char& c : msg)
        if (c == '|' || c == '\n') c = ' ';
      md += "- | - | - | - | - | " + msg + " |\n";
    }
  }
  return md;
}

}  // namespace detail

/// Trains every arm on the same splits and base pool; returns 2 if any arm failed.
inline int cmd_compare(const ExperimentConfig& cfg, OutputSet& out, std::size_t threads, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  detail::Prepared p = detail::prepare(cfg);
  TrainPlan plan = cfg.plan;
  plan.master_seed = cfg.master_seed;
  plan.validate();
  const Dataset& train = p.splits.train("fit");
  const Dataset& val = p.splits.val("fit");

  // Shared pool: single, bagging and the fusion arms all reuse these members.
  std::optional<std::vector<BaseMember>> pool;
  std::string pool_error;
  const auto pool_start = std::chrono::steady_clock::now();
  try {
    pool = train_base_pool(plan, train, threads);
  } catch (const std::exception& e) {
    pool_error = std::string("base pool: ") + e.what();
  }
  const double pool_time = detail::seconds_since(pool_start);

  const auto& arms = cfg.compare_arms;
  std::vector<ArmRow> rows(arms.size());
  std::vector<std::optional<EnsembleModel>> models(arms.size());
  std::vector<std::string> errors(arms.size());
  std::vector<Json> train_aux(arms.size(), Json::object());
  std::vector<double> times(arms.size(), 0.0);

  // Training only; the test split is not touched inside the parallel region.
  parallel_for(arms.size(), threads, [&](std::size_t a) {
    const std::string& arm = arms[a];
    const auto arm_start = std::chrono::steady_clock::now();
    try {
      if (arm == "stacking") {
        TrainPlan sp = plan;
        sp.strategy = Strategy::Stacking;
        FoldAudit audit;
        models[a] = train_stacking(sp, train, 1, &audit);
        train_aux[a]["leaked_rows"] = audit.leaked_rows().size();
        train_aux[a]["folds"] = audit.fold_rows.size();
      } else {
        if (!pool) throw TrainingError(pool_error);
        if (arm == "single" || arm == "bagging") {
          EnsembleModel m;
          m.strategy = Strategy::Bagging;
          m.class_count = train.class_count;
          m.input_dim = train.dim();
          m.vote = plan.vote;
          m.master_seed = plan.master_seed;
          if (arm == "single") {
            m.members = {pool->front()};
          } else {
            m.members = *pool;
          }
          models[a] = std::move(m);
        } else {
          TrainPlan ap = plan;
          ap.strategy = Strategy::Adaptive;
          ap.fusion = *detail::arm_fusion(arm);
          AdaptiveTrace trace;
          models[a] = train_adaptive_from_pool(ap, *pool, train, val, &trace);
          train_aux[a]["best_epoch"] = trace.best_epoch;
          train_aux[a]["epochs_run"] = trace.val_accuracy.size() - 1;
          train_aux[a]["best_val_accuracy"] = trace.val_accuracy[trace.best_epoch];
        }
      }
    } catch (const std::exception& e) {
      errors[a] = e.what();
    }
    times[a] = detail::seconds_since(arm_start);
    if (arm != "stacking") times[a] += pool_time;
  });

  // Final evaluation: one sanctioned test read shared by all arms.
  const Dataset& test = p.splits.test("final evaluation");
  const std::string hash = split_hash(p.splits.indices(2), test);
  bool any_failed = false;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmRow& row = rows[a];
    row.arm = arms[a];
    row.wall_time = times[a];
    row.aux = train_aux[a];
    if (!models[a]) {
      row.error = errors[a];
      any_failed = true;
      continue;
    }
    try {
      row.report = evaluate_model(*models[a], test);
      row.report->class_names.clear();
      if (row.arm == "single" || row.arm == "bagging") {
        Json accs = Json::array();
        for (const auto& m : models[a]->members) {
          accs.push_back(evaluate_probabilities(learner_predict_proba(m.learner, member_input(m, test.x)), test.y)
                             .accuracy);
        }
        row.aux["base_accuracies"] = accs;
      }
      if (models[a]->fusion) {
        const Json stats = detail::fusion_stats_json(fusion_stats(*models[a], test.x));
        for (const auto& [k, v] : stats.items()) row.aux[k] = v;
      }
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      any_failed = true;
    }
  }

  Json table = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["arm"] = r.arm;
    j["status"] = r.ok ? "ok" : "failed";
    j["error"] = r.ok ? Json(nullptr) : Json(r.error);
    j["metrics"] = r.ok ? report_to_json(*r.report) : Json(nullptr);
    j["aux"] = r.aux;
    j["test_split_hash"] = hash;
    j["wall_time"] = r.wall_time;
    table.push_back(j);
  }
  Json comparison;
  comparison["arms"] = table;
  comparison["test_split_hash"] = hash;
  comparison["master_seed"] = cfg.master_seed;

  Json manifest = detail::manifest_base("compare", cfg, p);
  manifest["plan"] = plan_to_json(plan);
  manifest["scaler"] = detail::scaler_json(p.scaler);
  manifest["shared_base_pool"] = true;
  Json seeds = Json::array();
  for (std::size_t i = 0; i < plan.ensemble_size; ++i) seeds.push_back(derive_seed(plan.master_seed, i));
  manifest["base_seeds"] = seeds;
  manifest["arms"] = arms;
  manifest["split_access"] = p.splits.log();
  manifest["wall_time"] = detail::seconds_since(start);

  out.write_json("comparison.json", comparison);
  out.write("comparison.md", detail::markdown_table(rows, hash));
  out.write_json("manifest.json", manifest);
  for (const auto& r : rows) {
    log << "compare: " << r.arm << " "
        << (r.ok ? "accuracy " + detail::fixed4(r.report->accuracy) : "FAILED: " + r.error) << "\n";
  }
  return any_failed ? 2 : 0;
}

// --- dispatch --------------------------------------------------------------------------

inline Json error_json(const std::string& command, const std::exception& e) {
  const char* type = dynamic_cast<const ParseError*>(&e)      ? "ParseError"
                     : dynamic_cast<const ContractError*>(&e) ? "ContractError"
                     : dynamic_cast<const TrainingError*>(&e) ? "TrainingError"
                                                              : "Error";
  return {{"status", "error"}, {"command", command}, {"error", {{"type", type}, {"message", e.what()}}}};
}

/// Runs one command end to end. Failures print error JSON to `err`, remove outputs and return 1.
inline int run_command(const std::string& command, const std::string& config_path, const CommandOptions& opts,
                       std::ostream& log, std::ostream& err) {
  std::optional<OutputSet> out;
  try {
    if (command != "generate" && command != "train" && command != "search" && command != "compare") {
      throw ContractError("unknown command '" + command + "' (expected generate, train, search or compare)");
    }
    if (opts.threads < 1) throw ContractError("--threads must be >= 1");
    ExperimentConfig cfg = load_config(config_path);
    if (opts.seed) cfg.master_seed = *opts.seed;
    if (opts.out) cfg.output_dir = *opts.out;
    out.emplace(fs::path(cfg.output_dir));
    if (command == "generate") return cmd_generate(cfg, *out, log);
    if (command == "train") return cmd_train(cfg, *out, opts.threads, log);
    if (command == "search") return cmd_search(cfg, *out, opts.threads, log);
    return cmd_compare(cfg, *out, opts.threads, log);
  } catch (const std::exception& e) {
    if (out) out->rollback();
    err << error_json(command, e).dump() << "\n";
    return 1;
  }
}

}  // namespace adafuse
