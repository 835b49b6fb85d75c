#pragma once

#include <adafuse/core/error.hpp>
#include <adafuse/core/matrix.hpp>
#include <adafuse/core/parallel.hpp>
#include <adafuse/core/params.hpp>
#include <adafuse/core/rng.hpp>
#include <adafuse/data/transforms.hpp>
#include <adafuse/ensemble/plan.hpp>
#include <adafuse/fusion/fusion.hpp>
#include <adafuse/learners/learner.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adafuse {

namespace detail {

inline Dataset view_dataset(const Dataset& ds, const std::optional<ViewSpan>& view) {
  if (!view) return ds;
  Dataset out = ds;
  out.x = select_cols(ds.x, view->begin, view->end);
  out.view_spans.reset();
  if (ds.feature_names.size() == ds.dim()) {
    out.feature_names.assign(ds.feature_names.begin() + static_cast<std::ptrdiff_t>(view->begin),
                             ds.feature_names.begin() + static_cast<std::ptrdiff_t>(view->end));
  }
  return out;
}

inline Learner train_learner(const TrainPlan& plan, const Dataset& data,
                             std::optional<std::span<const double>> weights, std::uint64_t seed) {
  const std::vector<double> uniform(weights ? 0 : data.size(), 1.0);
  const std::span<const double> w = weights ? *weights : std::span<const double>(uniform);
  switch (plan.base) {
    case BaseKind::Mlp: {
      MlpConfig cfg = plan.mlp;
      cfg.seed = seed;
      return mlp_train(mlp_init(cfg, data.dim(), data.class_count), data, weights, cfg);
    }
    case BaseKind::Stump: return stump_fit(data.x, data.y, data.class_count, w);
    case BaseKind::Majority: return majority_fit(data.y, data.class_count, w);
  }
  throw ContractError("unknown base learner kind");
}

inline std::vector<std::size_t> mistakes(const Learner& l, const Dataset& data) {
  const auto pred = learner_predict(l, data.x);
  std::vector<std::size_t> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = pred[i] != data.y[i];
  return out;
}

inline double accuracy_of(const Matrix& probs, std::span<const std::size_t> y) {
  if (y.empty()) return 0.0;
  const auto pred = argmax_rows(probs);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += pred[i] == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

}  // namespace detail

/// Stage 1 of bagging and the adaptive path: member i gets seed derive_seed(master, i),
/// its view, and (with bootstrap diversity) a resample drawn from stream 1000 + i.
inline std::vector<BaseMember> train_base_pool(const TrainPlan& plan, const Dataset& train,
                                               std::size_t threads = 1) {
  plan.validate();
  train.validate();
  std::vector<BaseMember> pool(plan.ensemble_size);
  parallel_for(plan.ensemble_size, threads, [&](std::size_t i) {
    BaseMember& m = pool[i];
    m.seed = derive_seed(plan.master_seed, i);
    m.view = member_view(plan, train, i);
    Dataset data = detail::view_dataset(train, m.view);
    if (plan.diversity == Diversity::Bootstrap) {
      RngStream rng = derive_stream(plan.master_seed, streams::kBootstrap + i);
      auto [sample, idx] = bootstrap_sample(data, rng);
      data = std::move(sample);
      m.bootstrap_indices = std::move(idx);
    }
    try {
      m.learner = detail::train_learner(plan, data, std::nullopt, m.seed);
    } catch (const Error& e) {
      throw TrainingError("base learner " + std::to_string(i) + ": " + e.what());
    }
  });
  return pool;
}

inline EnsembleModel train_bagging(const TrainPlan& plan, const Dataset& train, std::size_t threads = 1) {
  EnsembleModel model;
  model.strategy = Strategy::Bagging;
  model.class_count = train.class_count;
  model.input_dim = train.dim();
  model.vote = plan.vote;
  model.master_seed = plan.master_seed;
  model.members = train_base_pool(plan, train, threads);
  return model;
}

inline std::vector<Matrix> member_probabilities(const EnsembleModel& model, const Matrix& x) {
  std::vector<Matrix> out;
  for (const auto& m : model.members) out.push_back(learner_predict_proba(m.learner, member_input(m, x)));
  return out;
}

/// Average: mean of member probability rows. Majority: one-hot of the modal argmax,
/// ties toward the lower class.
inline Matrix predict_bagging(const EnsembleModel& model, const Matrix& x, VoteMode mode) {
  detail::require(!model.members.empty(), "predict_bagging: empty ensemble");
  const auto probs = member_probabilities(model, x);
  Matrix out(x.rows(), model.class_count);
  if (mode == VoteMode::Average) {
    for (const auto& p : probs) out += p;
    const double inv = 1.0 / static_cast<double>(probs.size());
    for (double& v : out.values()) v *= inv;
    return out;
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<double> counts(model.class_count, 0.0);
    for (const auto& p : probs) counts[argmax(p.row(r))] += 1.0;
    out(r, argmax(counts)) = 1.0;
  }
  return out;
}

struct AdaBoostRound {
  double error = 0.0;
  double alpha = 0.0;
  /// Instance weights after this round's update.
  double weight_sum = 0.0;
  double min_weight = 0.0;
  /// Training error of the ensemble of rounds 0..t.
  double ensemble_train_error = 0.0;
};

struct AdaBoostTrace {
  std::vector<AdaBoostRound> rounds;
  std::string stop_reason;
};

/// Weighted votes: score(c) = sum_t alpha_t * [learner t predicts c].
inline Matrix adaboost_votes(const EnsembleModel& model, const Matrix& x) {
  Matrix votes(x.rows(), model.class_count);
  for (const auto& m : model.members) {
    const auto pred = learner_predict(m.learner, member_input(m, x));
    for (std::size_t r = 0; r < x.rows(); ++r) votes(r, pred[r]) += m.alpha;
  }
  return votes;
}

inline Matrix predict_adaboost(const EnsembleModel& model, const Matrix& x) {
  detail::require(!model.members.empty(), "predict_adaboost: no boosting rounds");
  return softmax_rows(adaboost_votes(model, x));
}

inline constexpr double kAdaBoostErrorFloor = 1e-12;

/// SAMME vote weight ln((1 - err) / err) + ln(K - 1).
inline double samme_alpha(double err, std::size_t class_count) {
  return std::log((1.0 - err) / err) + std::log(static_cast<double>(class_count) - 1.0);
}

/// SAMME. Stops when a round is no better than chance (error >= 1 - 1/K, round discarded)
/// or after a perfect round (error floored at 1e-12). A weak-learner failure after at least
/// one accepted round ends training with a warning.
inline EnsembleModel train_adaboost(const TrainPlan& plan, const Dataset& train,
                                    AdaBoostTrace* trace = nullptr) {
  plan.validate();
  train.validate();
  const std::size_t n = train.size();
  const std::size_t k = train.class_count;
  const double chance = 1.0 - 1.0 / static_cast<double>(k);
  EnsembleModel model;
  model.strategy = Strategy::AdaBoost;
  model.class_count = k;
  model.input_dim = train.dim();
  model.vote = plan.vote;
  model.master_seed = plan.master_seed;
  AdaBoostTrace local;
  AdaBoostTrace& tr = trace ? *trace : local;
  tr = {};

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  Matrix votes(n, k);
  for (std::size_t t = 0; t < plan.ensemble_size; ++t) {
    BaseMember m;
    m.seed = derive_seed(plan.master_seed, t);
    m.view = member_view(plan, train, t);
    const Dataset data = detail::view_dataset(train, m.view);
    try {
      m.learner = detail::train_learner(plan, data, std::span<const double>(w), m.seed);
    } catch (const Error& e) {
      if (model.members.empty()) {
        throw TrainingError("adaboost: weak learner failed at round 0: " + std::string(e.what()));
      }
      model.warnings.push_back("adaboost: weak learner failed at round " + std::to_string(t) + ": " +
                               e.what() + "; kept " + std::to_string(t) + " rounds");
      tr.stop_reason = "weak learner failure";
      break;
    }
    const auto miss = detail::mistakes(m.learner, data);
    double err = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += w[i];
      err += miss[i] ? w[i] : 0.0;
    }
    err /= total;
    if (err >= chance) {
      if (model.members.empty()) {
        throw TrainingError("adaboost: round 0 weak learner error " + std::to_string(err) +
                            " is not below chance level 1 - 1/K = " + std::to_string(chance));
      }
      tr.stop_reason = "round " + std::to_string(t) + " error at or above chance";
      break;
    }
    const bool perfect = err < kAdaBoostErrorFloor;
    if (perfect) err = kAdaBoostErrorFloor;
    m.error = err;
    m.alpha = samme_alpha(err, k);

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (miss[i]) w[i] *= std::exp(m.alpha);
      sum += w[i];
    }
    double min_w = 1.0;
    for (double& v : w) {
      v /= sum;
      min_w = std::min(min_w, v);
    }

    const auto pred = learner_predict(m.learner, data.x);
    for (std::size_t i = 0; i < n; ++i) votes(i, pred[i]) += m.alpha;
    const auto ens = argmax_rows(votes);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < n; ++i) wrong += ens[i] != train.y[i];
    tr.rounds.push_back({err, m.alpha, std::accumulate(w.begin(), w.end(), 0.0), min_w,
                         static_cast<double>(wrong) / static_cast<double>(n)});
    model.members.push_back(std::move(m));
    if (perfect) {
      tr.stop_reason = "perfect round " + std::to_string(t);
      break;
    }
  }
  if (tr.stop_reason.empty()) tr.stop_reason = "round limit";
  return model;
}

/// Which fold models produced each meta row, and what those models trained on.
struct FoldAudit {
  std::vector<std::vector<std::size_t>> fold_rows;   ///< rows predicted by fold f's models
  std::vector<std::vector<std::size_t>> train_rows;  ///< rows fold f's models trained on
  std::vector<std::size_t> row_fold;                 ///< meta row -> fold

  /// Rows whose out-of-fold prediction came from a model that trained on them.
  std::vector<std::size_t> leaked_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < row_fold.size(); ++i) {
      const auto& tr = train_rows.at(row_fold[i]);
      if (std::binary_search(tr.begin(), tr.end(), i)) out.push_back(i);
    }
    return out;
  }
  bool rows_covered() const {
    std::vector<int> seen(row_fold.size(), 0);
    for (std::size_t f = 0; f < fold_rows.size(); ++f)
      for (std::size_t r : fold_rows[f]) {
        if (r >= seen.size() || row_fold[r] != f) return false;
        ++seen[r];
      }
    return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
  }
};

struct MetaDataset {
  Matrix x;  ///< n × (M·K) out-of-fold member probabilities
  std::vector<BaseMember> members;  ///< retrained on the full training set
  FoldAudit audit;
};

inline MetaDataset build_meta_dataset(const TrainPlan& plan, const Dataset& train, std::size_t threads = 1) {
  plan.validate();
  train.validate();
  const std::size_t n = train.size();
  const std::size_t k = train.class_count;
  const std::size_t m_count = plan.ensemble_size;
  const auto folds = kfold_indices(n, plan.folds, std::span<const std::size_t>(train.y),
                                   derive_seed(plan.master_seed, streams::kFolds));
  MetaDataset meta;
  meta.x = Matrix(n, m_count * k);
  meta.audit.row_fold.assign(n, 0);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    meta.audit.fold_rows.push_back(folds[f]);
    meta.audit.train_rows.push_back(complement_indices(n, folds[f]));
    for (std::size_t r : folds[f]) meta.audit.row_fold[r] = f;
  }

  std::vector<std::optional<ViewSpan>> views(m_count);
  for (std::size_t i = 0; i < m_count; ++i) views[i] = member_view(plan, train, i);

  // one job per (fold, member); each writes a disjoint block of meta.x
  parallel_for(folds.size() * m_count, threads, [&](std::size_t job) {
    const std::size_t f = job / m_count;
    const std::size_t i = job % m_count;
    const Dataset fit = detail::view_dataset(train.subset(meta.audit.train_rows[f]), views[i]);
    Learner clone;
    try {
      clone = detail::train_learner(plan, fit, std::nullopt, derive_seed(plan.master_seed, i));
    } catch (const Error& e) {
      throw TrainingError("stacking: base learner " + std::to_string(i) + " on fold " +
                          std::to_string(f) + ": " + e.what());
    }
    const Matrix held = select_rows(train.x, folds[f]);
    const Matrix p = learner_predict_proba(clone, views[i] ? select_cols(held, views[i]->begin, views[i]->end) : held);
    for (std::size_t r = 0; r < folds[f].size(); ++r)
      for (std::size_t c = 0; c < k; ++c) meta.x(folds[f][r], i * k + c) = p(r, c);
  });

  meta.members.resize(m_count);
  parallel_for(m_count, threads, [&](std::size_t i) {
    BaseMember& m = meta.members[i];
    m.seed = derive_seed(plan.master_seed, i);
    m.view = views[i];
    try {
      m.learner = detail::train_learner(plan, detail::view_dataset(train, m.view), std::nullopt, m.seed);
    } catch (const Error& e) {
      throw TrainingError("stacking: base learner " + std::to_string(i) + ": " + e.what());
    }
  });
  return meta;
}

/// Concatenated member probabilities, the stacking head's input.
inline Matrix stacked_probabilities(const std::vector<BaseMember>& members, const Matrix& x) {
  std::vector<Matrix> parts;
  for (const auto& m : members) parts.push_back(learner_predict_proba(m.learner, member_input(m, x)));
  return hconcat(parts);
}

/// Multinomial logistic head on the out-of-fold meta dataset.
inline EnsembleModel train_stacking(const TrainPlan& plan, const Dataset& train, std::size_t threads = 1,
                                    FoldAudit* audit = nullptr) {
  MetaDataset meta = build_meta_dataset(plan, train, threads);
  Dataset meta_ds;
  meta_ds.x = meta.x;
  meta_ds.y = train.y;
  meta_ds.class_count = train.class_count;
  MlpConfig head_cfg;
  head_cfg.epochs = plan.meta.epochs;
  head_cfg.batch_size = plan.meta.batch_size;
  head_cfg.learning_rate = plan.meta.learning_rate;
  head_cfg.l2 = plan.meta.l2;
  head_cfg.seed = derive_seed(plan.master_seed, streams::kMeta);
  MlpModel head;
  try {
    head = mlp_train(mlp_init(head_cfg, meta_ds.dim(), meta_ds.class_count), meta_ds, std::nullopt, head_cfg);
  } catch (const Error& e) {
    throw TrainingError(std::string("stacking meta head: ") + e.what());
  }

  EnsembleModel model;
  model.strategy = Strategy::Stacking;
  model.class_count = train.class_count;
  model.input_dim = train.dim();
  model.vote = plan.vote;
  model.master_seed = plan.master_seed;
  model.members = std::move(meta.members);
  model.meta_head = head.layers.front();
  if (audit) *audit = std::move(meta.audit);
  return model;
}

/// Penultimate features of every member, in member order.
inline std::vector<Matrix> pool_features(const std::vector<BaseMember>& members, const Matrix& x) {
  std::vector<Matrix> out;
  for (const auto& m : members) out.push_back(learner_features(m.learner, member_input(m, x)));
  return out;
}

struct AdaptiveGradients {
  FusionParams fusion;  ///< only trainable() tensors are meaningful
  Affine head;
  double loss = 0.0;

  std::vector<const Matrix*> tensors() const {
    auto out = fusion.trainable();
    out.push_back(&head.weight);
    out.push_back(&head.bias);
    return out;
  }
};

inline Matrix adaptive_logits(const FusionParams& fusion, const Affine& head, std::span<const Matrix> features) {
  return head.apply(fusion_forward(fusion, features).fused);
}

/// Mean cross-entropy of the fusion + head stack plus l2 * ||head weight||^2 / 2.
inline double adaptive_loss(const FusionParams& fusion, const Affine& head, std::span<const Matrix> features,
                            std::span<const std::size_t> y, double l2) {
  const std::vector<double> ones(y.size(), 1.0);
  double loss = weighted_cross_entropy(adaptive_logits(fusion, head, features), y, ones);
  if (l2 != 0.0) {
    double sq = 0.0;
    for (double v : head.weight.values()) sq += v * v;
    loss += 0.5 * l2 * sq;
  }
  return loss;
}

inline AdaptiveGradients adaptive_gradients(const FusionParams& fusion, const Affine& head,
                                            std::span<const Matrix> features, std::span<const std::size_t> y,
                                            double l2) {
  const FusionForward f = fusion_forward(fusion, features);
  const Matrix logits = head.apply(f.fused);
  const std::vector<double> ones(y.size(), 1.0);
  Matrix probs;
  AdaptiveGradients g;
  g.loss = weighted_cross_entropy(logits, y, ones, &probs);
  const double inv_n = 1.0 / static_cast<double>(y.size());
  Matrix d = probs;
  for (std::size_t i = 0; i < y.size(); ++i) {
    d(i, y[i]) -= 1.0;
    for (double& v : d.row(i)) v *= inv_n;
  }
  g.head.weight = matmul_tn(f.fused, d);
  g.head.bias = column_sums(d);
  if (l2 != 0.0) {
    double sq = 0.0;
    for (double v : head.weight.values()) sq += v * v;
    g.loss += 0.5 * l2 * sq;
    g.head.weight += l2 * head.weight;
  }
  g.fusion = fusion_backward(fusion, features, f, matmul_nt(d, head.weight)).grads;
  return g;
}

struct AdaptiveTrace {
  /// Full training-split loss; index 0 is before the first epoch.
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  std::size_t best_epoch = 0;
};

/// Stage 2 over a frozen pool: fit or initialize the fusion, then train fusion + head with
/// Adam. Keeps the epoch with the best validation accuracy (earliest on ties) among epochs
/// whose training loss does not exceed the epoch-0 loss; stops after `patience` epochs
/// without improvement.
inline EnsembleModel train_adaptive_from_pool(const TrainPlan& plan, const std::vector<BaseMember>& pool,
                                              const Dataset& train, const Dataset& val,
                                              AdaptiveTrace* trace = nullptr) {
  plan.validate();
  detail::require(!pool.empty(), "train_adaptive: empty base pool");
  detail::require(val.size() > 0, "train_adaptive: validation split is empty");
  detail::require(val.dim() == train.dim(), "train_adaptive: train/val dimension mismatch");
  const std::size_t k = train.class_count;
  const auto feats = pool_features(pool, train.x);
  const auto val_feats = pool_features(pool, val.x);
  std::vector<std::size_t> dims;
  for (const auto& f : feats) dims.push_back(f.cols());

  RngStream init_rng = derive_stream(plan.master_seed, streams::kMeta);
  FusionParams fusion = fusion_init(plan.fusion, dims, plan.fusion_shape, init_rng);
  if (plan.fusion == FusionKind::Pca) pca_fit_sources(fusion, feats, plan.fusion_shape.out_dim);
  const std::size_t d_out = fusion.output_dim();
  Affine head{detail::gaussian_matrix(d_out, k, 1.0 / std::sqrt(static_cast<double>(d_out)), init_rng),
              Matrix(1, k)};

  auto params = fusion.trainable();
  params.push_back(&head.weight);
  params.push_back(&head.bias);
  Adam adam({plan.meta.learning_rate, plan.mlp.beta1, plan.mlp.beta2, plan.mlp.adam_eps}, params);
  RngStream shuffle_rng = derive_stream(plan.master_seed, streams::kMetaShuffle);

  AdaptiveTrace local;
  AdaptiveTrace& tr = trace ? *trace : local;
  tr = {};
  auto evaluate = [&] {
    const double loss = adaptive_loss(fusion, head, feats, train.y, plan.meta.l2);
    if (!std::isfinite(loss)) {
      throw TrainingError("adaptive: non-finite meta loss after epoch " + std::to_string(tr.train_loss.size()));
    }
    tr.train_loss.push_back(loss);
    tr.val_accuracy.push_back(detail::accuracy_of(softmax_rows(adaptive_logits(fusion, head, val_feats)), val.y));
  };
  evaluate();
  FusionParams best_fusion = fusion;
  Affine best_head = head;
  double best_acc = tr.val_accuracy[0];

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> batch_feats(feats.size());
  std::vector<std::size_t> batch_y;
  for (std::size_t epoch = 1; epoch <= plan.meta.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < n; start += plan.meta.batch_size, ++batch_no) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(n, start + plan.meta.batch_size) - start);
      for (std::size_t s = 0; s < feats.size(); ++s) batch_feats[s] = select_rows(feats[s], idx);
      batch_y.clear();
      for (std::size_t i : idx) batch_y.push_back(train.y[i]);
      const AdaptiveGradients g = adaptive_gradients(fusion, head, batch_feats, batch_y, plan.meta.l2);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("adaptive: non-finite meta loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no));
      }
      adam.step(params, g.tensors());
    }
    evaluate();
    if (tr.val_accuracy[epoch] > best_acc && tr.train_loss[epoch] <= tr.train_loss[0]) {
      best_acc = tr.val_accuracy[epoch];
      tr.best_epoch = epoch;
      best_fusion = fusion;
      best_head = head;
    } else if (epoch - tr.best_epoch >= plan.meta.patience) {
      break;
    }
  }

  EnsembleModel model;
  model.strategy = Strategy::Adaptive;
  model.class_count = k;
  model.input_dim = train.dim();
  model.vote = plan.vote;
  model.master_seed = plan.master_seed;
  model.members = pool;
  model.fusion = std::move(best_fusion);
  model.meta_head = std::move(best_head);
  return model;
}

inline EnsembleModel train_adaptive(const TrainPlan& plan, const Dataset& train, const Dataset& val,
                                    std::size_t threads = 1, AdaptiveTrace* trace = nullptr) {
  return train_adaptive_from_pool(plan, train_base_pool(plan, train, threads), train, val, trace);
}

/// Trains whichever strategy the plan names. Adaptive needs `val`.
inline EnsembleModel train_ensemble(const TrainPlan& plan, const Dataset& train, const Dataset* val = nullptr,
                                    std::size_t threads = 1) {
  switch (plan.strategy) {
    case Strategy::Bagging: return train_bagging(plan, train, threads);
    case Strategy::AdaBoost: return train_adaboost(plan, train);
    case Strategy::Stacking: return train_stacking(plan, train, threads);
    case Strategy::Adaptive:
      detail::require(val != nullptr, "train_ensemble: adaptive strategy needs a validation split");
      return train_adaptive(plan, train, *val, threads);
  }
  throw ContractError("unknown strategy");
}

/// Class probabilities for any strategy; bagging uses the model's vote mode.
inline Matrix predict_proba(const EnsembleModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim) {
    throw ContractError("predict: input has " + std::to_string(x.cols()) + " columns, model expects " +
                        std::to_string(model.input_dim));
  }
  switch (model.strategy) {
    case Strategy::Bagging: return predict_bagging(model, x, model.vote);
    case Strategy::AdaBoost: return predict_adaboost(model, x);
    case Strategy::Stacking:
      detail::require(model.meta_head.has_value(), "predict: stacking model without a meta head");
      return softmax_rows(model.meta_head->apply(stacked_probabilities(model.members, x)));
    case Strategy::Adaptive: {
      detail::require(model.fusion && model.meta_head, "predict: adaptive model without fusion or head");
      const auto feats = pool_features(model.members, x);
      return softmax_rows(adaptive_logits(*model.fusion, *model.meta_head, feats));
    }
  }
  throw ContractError("unknown strategy");
}

inline std::vector<std::size_t> predict(const EnsembleModel& model, const Matrix& x) {
  return argmax_rows(predict_proba(model, x));
}

struct FusionStats {
  std::optional<double> mean_attention_entropy;
  std::optional<double> mean_gate_openness;
};

/// Per-instance adaptivity summary of an adaptive model's fusion layer on x.
inline FusionStats fusion_stats(const EnsembleModel& model, const Matrix& x) {
  FusionStats s;
  if (!model.fusion) return s;
  const auto feats = pool_features(model.members, x);
  const FusionForward f = fusion_forward(*model.fusion, feats);
  if (model.fusion->kind == FusionKind::Attention) s.mean_attention_entropy = mean_attention_entropy(f);
  if (model.fusion->kind == FusionKind::Gated) s.mean_gate_openness = mean_gate_openness(f);
  return s;
}

}  // namespace adafuse
