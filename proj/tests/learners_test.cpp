#include <adafuse/core/gradcheck.hpp>
#include <adafuse/data/generators.hpp>
#include <adafuse/data/transforms.hpp>
#include <adafuse/learners/learner.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace adafuse;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * (2.0 * rng.next_double() - 1.0);
  return m;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t k, RngStream& rng) {
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = rng.next_index(k);
  return y;
}

// Gradient of the full parameter vector as one flat row, for finite_diff_check.
double mlp_gradcheck(const MlpModel& model, const Matrix& x, std::span<const std::size_t> y,
                     std::span<const double> w, double l2) {
  const Matrix flat = pack(model.parameters());
  auto with = [&](const Matrix& p) {
    MlpModel m = model;
    unpack(p, m.parameters());
    return m;
  };
  auto loss = [&](const Matrix& p) { return mlp_loss(with(p), x, y, w, l2); };
  auto grad = [&](const Matrix& p) { return pack(mlp_gradients(with(p), x, y, w, l2).tensors()); };
  return finite_diff_check(loss, grad, flat, 1e-6);
}

double train_accuracy(const Learner& l, const Dataset& ds) {
  const auto pred = learner_predict(l, ds.x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) ok += pred[i] == ds.y[i];
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

// Best weighted error over every (feature, midpoint threshold, left label, right label).
double brute_force_stump_error(const Matrix& x, std::span<const std::size_t> y, std::size_t k,
                               std::span<const double> w) {
  double total = 0.0;
  for (double v : w) total += v;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double err = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) err += y[i] != c ? w[i] : 0.0;
    best = std::min(best, err / total);
  }
  for (std::size_t j = 0; j < x.cols(); ++j) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < x.rows(); ++i) vals.push_back(x(i, j));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t t = 0; t + 1 < vals.size(); ++t) {
      const double thr = 0.5 * (vals[t] + vals[t + 1]);
      for (std::size_t lc = 0; lc < k; ++lc)
        for (std::size_t rc = 0; rc < k; ++rc) {
          double err = 0.0;
          for (std::size_t i = 0; i < x.rows(); ++i) {
            const std::size_t pred = x(i, j) <= thr ? lc : rc;
            if (pred != y[i]) err += w[i];
          }
          best = std::min(best, err / total);
        }
    }
  }
  return best;
}

Dataset one_d_separable() {
  Dataset ds;
  ds.class_count = 2;
  ds.x = Matrix(40, 1);
  for (std::size_t i = 0; i < 40; ++i) {
    const double v = 1.0 + static_cast<double>(i % 20) * 0.1;
    ds.x(i, 0) = i < 20 ? -v : v;
    ds.y.push_back(i < 20 ? 0 : 1);
  }
  return ds;
}

}  // namespace

TEST(MlpInit, ShapesAndDeterminism) {
  MlpConfig cfg;
  cfg.hidden_dims = {6, 4};
  cfg.seed = 3;
  const MlpModel a = mlp_init(cfg, 5, 3);
  ASSERT_EQ(a.layers.size(), 3u);
  EXPECT_EQ(a.layers[0].weight.rows(), 5u);
  EXPECT_EQ(shape_string(a.layers[1].weight), "6x4");
  EXPECT_EQ(a.layers[2].weight.cols(), 3u);
  for (const auto& l : a.layers)
    for (double b : l.bias.values()) EXPECT_EQ(b, 0.0);
  EXPECT_TRUE(a.same_parameters(mlp_init(cfg, 5, 3)));

  cfg.hidden_dims.clear();
  const MlpModel lin = mlp_init(cfg, 5, 3);
  ASSERT_EQ(lin.layers.size(), 1u);
  EXPECT_EQ(shape_string(lin.layers[0].weight), "5x3");
  EXPECT_THROW(mlp_init(cfg, 5, 1), ContractError);
}

TEST(MlpInit, HeStandardDeviation) {
  MlpConfig cfg;
  cfg.hidden_dims = {200};
  cfg.seed = 11;
  const MlpModel m = mlp_init(cfg, 1000, 2);
  double sq = 0.0;
  for (double w : m.layers[0].weight.values()) sq += w * w;
  const double sd = std::sqrt(sq / static_cast<double>(m.layers[0].weight.size()));
  EXPECT_NEAR(sd, std::sqrt(2.0 / 1000.0), 0.1 * std::sqrt(2.0 / 1000.0));
}

TEST(MlpForward, ZeroWeightsGiveUniform) {
  MlpConfig cfg;
  cfg.hidden_dims = {3};
  MlpModel m = mlp_init(cfg, 2, 4);
  for (Matrix* p : m.parameters()) p->fill(0.0);
  const Matrix x = Matrix::from_rows({{1.0, -2.0}, {0.3, 9.0}});
  const MlpForward f = mlp_forward(m, x);
  for (double v : f.logits.values()) EXPECT_EQ(v, 0.0);
  const Learner l = m;
  const Matrix p = learner_predict_proba(l, x);
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(MlpForward, ReluNegativePreactivationsVanish) {
  MlpConfig cfg;
  cfg.hidden_dims = {4};
  MlpModel m = mlp_init(cfg, 2, 2);
  m.layers[0].weight.fill(1.0);
  m.layers[0].bias.fill(-100.0);
  const MlpForward f = mlp_forward(m, Matrix::from_rows({{1.0, 2.0}}));
  for (double v : f.penultimate.values()) EXPECT_EQ(v, 0.0);
}

TEST(MlpForward, HandComputedTanhUnit) {
  MlpConfig cfg;
  cfg.hidden_dims = {1};
  cfg.activation = Activation::Tanh;
  MlpModel m = mlp_init(cfg, 1, 2);
  m.layers[0].weight(0, 0) = 0.7;
  m.layers[0].bias(0, 0) = -0.2;
  m.layers[1].weight = Matrix::from_rows({{1.5, -0.5}});
  m.layers[1].bias = Matrix::from_rows({{0.1, 0.3}});
  const MlpForward f = mlp_forward(m, Matrix::from_rows({{2.0}}));
  const double h = std::tanh(0.7 * 2.0 - 0.2);
  EXPECT_NEAR(f.penultimate(0, 0), h, 1e-12);
  EXPECT_NEAR(f.logits(0, 0), 1.5 * h + 0.1, 1e-12);
  EXPECT_NEAR(f.logits(0, 1), -0.5 * h + 0.3, 1e-12);
  EXPECT_THROW(mlp_forward(m, Matrix(1, 2)), ContractError);
}

TEST(MlpForward, ProbabilitiesAreSoftmaxOfLogitsBitwise) {
  MlpConfig cfg;
  cfg.hidden_dims = {5};
  cfg.seed = 2;
  const MlpModel m = mlp_init(cfg, 3, 3);
  RngStream rng(5);
  const Matrix x = random_matrix(10, 3, rng);
  EXPECT_EQ(learner_predict_proba(Learner{m}, x), softmax_rows(mlp_forward(m, x).logits));
}

TEST(MlpGradients, FiniteDifferenceSpecExample) {
  MlpConfig cfg;
  cfg.hidden_dims = {3};
  cfg.activation = Activation::Tanh;
  cfg.seed = 4;
  const MlpModel m = mlp_init(cfg, 4, 2);
  RngStream rng(8);
  const Matrix x = random_matrix(8, 4, rng);
  const auto y = random_labels(8, 2, rng);
  std::vector<double> w(8);
  for (double& v : w) v = 0.1 + rng.next_double();
  EXPECT_LT(mlp_gradcheck(m, x, y, w, 0.0), 1e-4);
  EXPECT_LT(mlp_gradcheck(m, x, y, w, 0.3), 1e-4);
}

TEST(MlpGradients, FiniteDifferenceRandomArchitectures) {
  RngStream rng(21);
  for (int draw = 0; draw < 20; ++draw) {
    MlpConfig cfg;
    const std::size_t depth = rng.next_index(3);
    for (std::size_t d = 0; d < depth; ++d) cfg.hidden_dims.push_back(1 + rng.next_index(5));
    cfg.activation = draw % 2 == 0 ? Activation::Tanh : Activation::Relu;
    cfg.seed = static_cast<std::uint64_t>(draw);
    const std::size_t in = 1 + rng.next_index(5), k = 2 + rng.next_index(3), n = 1 + rng.next_index(10);
    MlpModel m = mlp_init(cfg, in, k);
    // nonzero biases keep ReLU pre-activations off the kink at exactly 0
    for (auto& layer : m.layers) layer.bias = random_matrix(1, layer.bias.cols(), rng, 0.5);
    const Matrix x = random_matrix(n, in, rng, 2.0);
    const auto y = random_labels(n, k, rng);
    std::vector<double> w(n);
    for (double& v : w) v = rng.next_double() + 0.05;
    EXPECT_LT(mlp_gradcheck(m, x, y, w, draw % 3 == 0 ? 0.1 : 0.0), 1e-4)
        << "draw " << draw << " depth " << depth << " in " << in << " k " << k << " n " << n;
  }
}

TEST(MlpGradients, WeightInvariances) {
  MlpConfig cfg;
  cfg.hidden_dims = {4};
  cfg.seed = 6;
  const MlpModel m = mlp_init(cfg, 3, 2);
  RngStream rng(12);
  const Matrix x = random_matrix(6, 3, rng);
  const auto y = random_labels(6, 2, rng);
  std::vector<double> w{0.5, 1.0, 2.0, 0.1, 0.7, 1.3};

  // doubling every weight changes nothing
  std::vector<double> w2;
  for (double v : w) w2.push_back(2.0 * v);
  const auto g1 = pack(mlp_gradients(m, x, y, w, 0.0).tensors());
  const auto g2 = pack(mlp_gradients(m, x, y, w2, 0.0).tensors());
  EXPECT_LE(max_abs_diff(g1, g2), 1e-15);

  // duplicate row with weight w equals one copy at 2w
  Matrix dup(7, 3);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 3; ++j) dup(i, j) = x(i, j);
  for (std::size_t j = 0; j < 3; ++j) dup(6, j) = x(0, j);
  std::vector<std::size_t> ydup = y;
  ydup.push_back(y[0]);
  std::vector<double> wdup = w;
  wdup.push_back(w[0]);
  std::vector<double> wmerged = w;
  wmerged[0] *= 2.0;
  EXPECT_NEAR(mlp_loss(m, dup, ydup, wdup, 0.0), mlp_loss(m, x, y, wmerged, 0.0), 1e-14);
  EXPECT_LE(max_abs_diff(pack(mlp_gradients(m, dup, ydup, wdup, 0.0).tensors()),
                         pack(mlp_gradients(m, x, y, wmerged, 0.0).tensors())),
            1e-14);

  // zero-weight row equals dropping the row
  std::vector<double> wz = w;
  wz[5] = 0.0;
  const std::vector<std::size_t> keep{0, 1, 2, 3, 4};
  const Matrix xk = select_rows(x, keep);
  const std::vector<std::size_t> yk(y.begin(), y.begin() + 5);
  const std::vector<double> wk(w.begin(), w.begin() + 5);
  EXPECT_LE(max_abs_diff(pack(mlp_gradients(m, x, y, wz, 0.0).tensors()),
                         pack(mlp_gradients(m, xk, yk, wk, 0.0).tensors())),
            1e-15);

  // zero-weight batch leaves only the l2 term
  const std::vector<double> zeros(6, 0.0);
  const MlpGradients gz = mlp_gradients(m, x, y, zeros, 0.5);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_EQ(gz.layers[l].weight, 0.5 * m.layers[l].weight);
    for (double b : gz.layers[l].bias.values()) EXPECT_EQ(b, 0.0);
  }
}

TEST(MlpTrain, LinearModelSeparatesOneDimensionalData) {
  const Dataset ds = one_d_separable();
  MlpConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.seed = 1;
  const MlpModel m = mlp_train(mlp_init(cfg, 1, 2), ds, std::nullopt, cfg);
  EXPECT_EQ(train_accuracy(Learner{m}, ds), 1.0);
  EXPECT_LT(m.loss_history.back(), m.initial_loss);
  EXPECT_EQ(m.loss_history.size(), 200u);
}

TEST(MlpTrain, UniformWeightsMatchUnweightedAndDeterminism) {
  const Dataset ds = make_two_moons(60, 0.1, 4);
  MlpConfig cfg;
  cfg.hidden_dims = {8};
  cfg.epochs = 5;
  cfg.seed = 9;
  const MlpModel base = mlp_init(cfg, 2, 2);
  const MlpModel plain = mlp_train(base, ds, std::nullopt, cfg);
  const std::vector<double> ones(ds.size(), 1.0);
  const MlpModel weighted = mlp_train(base, ds, std::span<const double>(ones), cfg);
  EXPECT_TRUE(plain.same_parameters(weighted));
  EXPECT_TRUE(plain.same_parameters(mlp_train(base, ds, std::nullopt, cfg)));
}

TEST(MlpTrain, RejectsBadWeightsAndReportsDivergence) {
  const Dataset ds = one_d_separable();
  MlpConfig cfg;
  cfg.epochs = 1;
  const MlpModel m = mlp_init(cfg, 1, 2);
  const std::vector<double> zeros(ds.size(), 0.0);
  EXPECT_THROW(mlp_train(m, ds, std::span<const double>(zeros), cfg), ContractError);

  Dataset huge = ds;
  for (double& v : huge.x.values()) v *= 1e308;
  cfg.learning_rate = 1e300;
  try {
    mlp_train(m, huge, std::nullopt, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos) << e.what();
  }
}

TEST(MlpTrain, LearnsTwoMoons) {
  const Dataset ds = make_two_moons(200, 0.1, 7);
  MlpConfig cfg;
  cfg.hidden_dims = {16};
  cfg.epochs = 100;
  cfg.seed = 2;
  const MlpModel m = mlp_train(mlp_init(cfg, 2, 2), ds, std::nullopt, cfg);
  EXPECT_GT(train_accuracy(Learner{m}, ds), 0.95);
}

TEST(MlpTrain, SingleViewOfXorIsNearChance) {
  const Dataset full = make_multiview_xor(1000, 5, 0.1, 3);
  const SplitResult split = stratified_split(full, {0.6, 0.2, 0.2}, 3);
  const auto view0 = [](const Dataset& d) {
    Dataset v = d;
    v.x = select_cols(d.x, 0, 5);
    v.view_spans.reset();
    v.feature_names.resize(5);
    return v;
  };
  MlpConfig cfg;
  cfg.hidden_dims = {16};
  cfg.seed = 5;
  const MlpModel m = mlp_train(mlp_init(cfg, 5, 2), view0(split.train), std::nullopt, cfg);
  const double acc = train_accuracy(Learner{m}, view0(split.test));
  EXPECT_GE(acc, 0.40);
  EXPECT_LE(acc, 0.60);
}

TEST(Stump, ForcedThreshold) {
  const Matrix x = Matrix::from_rows({{-1.0}, {1.0}});
  const std::vector<std::size_t> y{0, 1};
  const std::vector<double> w{1.0, 1.0};
  const DecisionStump s = stump_fit(x, y, 2, w);
  EXPECT_EQ(s.threshold, 0.0);
  EXPECT_EQ(s.weighted_error, 0.0);
  EXPECT_EQ(s.left_class, 0u);
  EXPECT_EQ(s.right_class, 1u);
  EXPECT_FALSE(s.constant);
}

TEST(Stump, ConcentratedWeight) {
  const Matrix x = Matrix::from_rows({{0.0}, {1.0}, {2.0}, {3.0}});
  const std::vector<std::size_t> y{1, 0, 1, 0};
  const std::vector<double> w{0.0, 0.0, 1.0, 0.0};
  const DecisionStump s = stump_fit(x, y, 2, w);
  EXPECT_EQ(s.weighted_error, 0.0);
  EXPECT_EQ(s.predict_one(x.row(2)), 1u);
}

TEST(Stump, XorFourPointsMatchesEnumeration) {
  // Any axis split leaves one point of each class on both sides.
  const Matrix x = Matrix::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const std::vector<std::size_t> y{0, 1, 1, 0};
  const std::vector<double> w(4, 0.25);
  const DecisionStump s = stump_fit(x, y, 2, w);
  EXPECT_DOUBLE_EQ(s.weighted_error, brute_force_stump_error(x, y, 2, w));
  EXPECT_DOUBLE_EQ(s.weighted_error, 0.5);
}

TEST(Stump, IdenticalRowsGiveFlaggedConstant) {
  const Matrix x = Matrix::from_rows({{2, 2}, {2, 2}, {2, 2}});
  const std::vector<std::size_t> y{1, 1, 0};
  const std::vector<double> w(3, 1.0);
  const DecisionStump s = stump_fit(x, y, 2, w);
  EXPECT_TRUE(s.constant);
  EXPECT_EQ(s.left_class, 1u);
  EXPECT_EQ(s.right_class, 1u);
  EXPECT_NEAR(s.weighted_error, 1.0 / 3.0, 1e-15);
}

TEST(Stump, TiesPreferLowestFeatureThenThreshold) {
  // Both features separate perfectly; feature 0 has two perfect thresholds.
  const Matrix x = Matrix::from_rows({{0, 5}, {1, 5}, {1, 6}, {1, 6}});
  const std::vector<std::size_t> y{0, 0, 1, 1};
  const std::vector<double> w{1.0, 0.0, 1.0, 1.0};
  const DecisionStump s = stump_fit(x, y, 2, w);
  EXPECT_EQ(s.feature_index, 0u);
  EXPECT_EQ(s.threshold, 0.5);
  EXPECT_EQ(s.weighted_error, 0.0);
}

TEST(Stump, MatchesBruteForceOnRandomData) {
  RngStream rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.next_index(50), d = 1 + rng.next_index(4), k = 2 + rng.next_index(3);
    Matrix x(n, d);
    // coarse grid so duplicate values are common
    for (double& v : x.values()) v = static_cast<double>(rng.next_index(6)) - 2.0;
    const auto y = random_labels(n, k, rng);
    std::vector<double> w(n);
    for (double& v : w) v = rng.next_index(4) == 0 ? 0.0 : rng.next_double();
    w[0] += 0.1;
    const DecisionStump s = stump_fit(x, y, k, w);
    EXPECT_NEAR(s.weighted_error, brute_force_stump_error(x, y, k, w), 1e-12) << "trial " << trial;
    // the reported error is the stump's actual weighted error
    double err = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += w[i];
      err += s.predict_one(x.row(i)) != y[i] ? w[i] : 0.0;
    }
    EXPECT_NEAR(s.weighted_error, err / total, 1e-12);
  }
}

TEST(Learner, StumpAndMajorityProbabilitiesAreOneHot) {
  const Matrix x = Matrix::from_rows({{-1.0}, {0.5}, {3.0}});
  const std::vector<std::size_t> y{0, 1, 2};
  const std::vector<double> w(3, 1.0);
  const Learner stump = stump_fit(x, y, 3, w);
  const Matrix p = learner_predict_proba(stump, x);
  const auto pred = learner_predict(stump, x);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(p(i, c), c == pred[i] ? 1.0 : 0.0);

  const Learner maj = majority_fit(std::vector<std::size_t>{2, 2, 0}, 3, w);
  EXPECT_EQ(learner_predict(maj, x), (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_THROW(learner_features(maj, x), ContractError);
}
