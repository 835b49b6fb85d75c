#include <adafuse/core/gradcheck.hpp>
#include <adafuse/core/matrix.hpp>
#include <adafuse/core/params.hpp>
#include <adafuse/core/parallel.hpp>
#include <adafuse/core/rng.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

using namespace adafuse;

namespace {

// Reference product, independent of the library's loop order.
Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = 2.0 * rng.next_double() - 1.0;
  return m;
}

}  // namespace

TEST(Matmul, IdentityAndAnnihilator) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Matrix::identity(2), a), a);
  const Matrix zero(3, 2);
  const Matrix anything = Matrix::from_rows({{5, -1, 2}, {0.5, 7, 1}});
  EXPECT_EQ(matmul(zero, anything), Matrix(3, 3));
}

TEST(Matmul, HandExample) {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  const Matrix expected = triple_loop(a, b);
  EXPECT_EQ(expected, Matrix::from_rows({{19, 22}, {43, 50}}));
  EXPECT_EQ(matmul(a, b), expected);
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ContractError);
}

TEST(Matmul, TransposedVariantsAgree) {
  RngStream rng(7);
  const Matrix a = random_matrix(5, 3, rng);
  const Matrix b = random_matrix(5, 4, rng);
  const Matrix c = random_matrix(6, 3, rng);
  EXPECT_LE(max_abs_diff(matmul_tn(a, b), triple_loop(transpose(a), b)), 1e-12);
  EXPECT_LE(max_abs_diff(matmul_nt(a, c), triple_loop(a, transpose(c))), 1e-12);
}

TEST(Matmul, AssociativityProperty) {
  RngStream rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + rng.next_index(5), k = 1 + rng.next_index(5);
    const std::size_t l = 1 + rng.next_index(5), n = 1 + rng.next_index(5);
    const Matrix a = random_matrix(m, k, rng), b = random_matrix(k, l, rng), c = random_matrix(l, n, rng);
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(Softmax, Examples) {
  const Matrix uniform = softmax_rows(Matrix(1, 3));
  for (double v : uniform.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);

  const Matrix p = softmax_rows(Matrix::from_rows({{std::log(1.0), std::log(2.0), std::log(3.0)}}));
  EXPECT_NEAR(p(0, 0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(p(0, 2), 3.0 / 6.0, 1e-15);

  const Matrix v = Matrix::from_rows({{0.3, -1.2, 4.0}});
  const Matrix shifted = Matrix::from_rows({{100.3, 98.8, 104.0}});
  EXPECT_LE(max_abs_diff(softmax_rows(v), softmax_rows(shifted)), 1e-12);
}

TEST(Softmax, RowsSumToOneOnWideLogits) {
  RngStream rng(3);
  Matrix logits(200, 7);
  for (double& v : logits.values()) v = -50.0 + 100.0 * rng.next_double();
  const Matrix p = softmax_rows(logits);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Rng, SplitMixReferenceValue) {
  std::uint64_t state = 0;
  EXPECT_EQ(splitmix64_next(state), 0xE220A8397B1DCDAFULL);
  RngStream s(0);
  EXPECT_EQ(s.next_u64(), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, DerivedStreamsAreDeterministicAndDistinct) {
  RngStream a = derive_stream(42, 3), b = derive_stream(42, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());

  RngStream s0 = derive_stream(42, 0), s1 = derive_stream(42, 1);
  EXPECT_NE(s0.state(), s1.state());
  int equal = 0;
  for (int i = 0; i < 1000; ++i) equal += s0.next_u64() == s1.next_u64();
  EXPECT_EQ(equal, 0);
}

TEST(Rng, RestoredStateContinuesIdentically) {
  RngStream a = derive_stream(9, 5);
  for (int i = 0; i < 37; ++i) a.next_u64();
  RngStream restored(a.state(), a.stream_id());
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(a.next_u64(), restored.next_u64());
    EXPECT_EQ(a.next_normal(), restored.next_normal());
  }
}

TEST(Rng, IndexIsInRangeAndRoughlyUniform) {
  RngStream rng(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.next_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(FiniteDiff, QuadraticLoss) {
  const Matrix p = Matrix::from_rows({{0.3, -1.7, 2.5, 0.01}});
  auto loss = [](const Matrix& q) {
    double s = 0.0;
    for (double v : q.values()) s += 0.5 * v * v;
    return s;
  };
  auto grad = [](const Matrix& q) { return q; };
  EXPECT_LT(finite_diff_check(loss, grad, p, 1e-5), 1e-8);
}

TEST(FiniteDiff, ConstantLossZeroGrad) {
  const Matrix p = Matrix::from_rows({{1.0, 2.0}});
  auto loss = [](const Matrix&) { return 3.0; };
  auto grad = [](const Matrix& q) { return Matrix(q.rows(), q.cols()); };
  EXPECT_EQ(finite_diff_check(loss, grad, p, 1e-5), 0.0);
}

TEST(FiniteDiff, WrongGradientIsOneThird) {
  const Matrix p = Matrix::from_rows({{0.7, -1.1, 2.0}});
  auto loss = [](const Matrix& q) {
    double s = 0.0;
    for (double v : q.values()) s += 0.5 * v * v;
    return s;
  };
  auto doubled = [](const Matrix& q) { return 2.0 * q; };
  // |2p - p| / (|2p| + |p|) = 1/3 for every coordinate
  EXPECT_NEAR(finite_diff_check(loss, doubled, p, 1e-5), 1.0 / 3.0, 1e-8);
}

TEST(FiniteDiff, NonFiniteLossNamesCoordinate) {
  const Matrix p = Matrix::from_rows({{1.0, 0.0, 1.0}});
  auto loss = [](const Matrix& q) { return q(0, 1) > 0.0 ? std::numeric_limits<double>::infinity() : 0.0; };
  auto grad = [](const Matrix& q) { return Matrix(q.rows(), q.cols()); };
  try {
    finite_diff_check(loss, grad, p, 1e-5);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
  }
}

TEST(Params, PackUnpackRoundTrip) {
  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix b = Matrix::from_rows({{5, 6, 7}});
  std::vector<const Matrix*> views{&a, &b};
  const Matrix flat = pack(views);
  EXPECT_EQ(flat.size(), 7u);
  Matrix a2(2, 2), b2(1, 3);
  std::vector<Matrix*> targets{&a2, &b2};
  unpack(flat, targets);
  EXPECT_EQ(a2, a);
  EXPECT_EQ(b2, b);
}

TEST(Parallel, ResultsIndependentOfThreadCount) {
  std::vector<std::uint64_t> one(64), many(64);
  parallel_for(64, 1, [&](std::size_t i) { one[i] = derive_stream(5, i).next_u64(); });
  parallel_for(64, 8, [&](std::size_t i) { many[i] = derive_stream(5, i).next_u64(); });
  EXPECT_EQ(one, many);
}
