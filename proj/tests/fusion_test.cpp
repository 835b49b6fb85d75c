#include <adafuse/core/gradcheck.hpp>
#include <adafuse/fusion/fusion.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace adafuse;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * (2.0 * rng.next_double() - 1.0);
  return m;
}

std::vector<Matrix> random_sources(std::size_t n, const std::vector<std::size_t>& dims, RngStream& rng) {
  std::vector<Matrix> out;
  for (std::size_t d : dims) out.push_back(random_matrix(n, d, rng));
  return out;
}

// Scalar test loss L = sum(upstream ⊙ fused), so dL/dfused = upstream.
double linear_functional(const Matrix& fused, const Matrix& upstream) {
  double s = 0.0;
  for (std::size_t i = 0; i < fused.size(); ++i) s += fused.values()[i] * upstream.values()[i];
  return s;
}

double param_gradcheck(const FusionParams& p0, const std::vector<Matrix>& features, const Matrix& upstream) {
  const Matrix flat = pack(p0.trainable());
  auto with = [&](const Matrix& flat_params) {
    FusionParams p = p0;
    unpack(flat_params, p.trainable());
    return p;
  };
  auto loss = [&](const Matrix& fp) {
    return linear_functional(fusion_forward(with(fp), features).fused, upstream);
  };
  auto grad = [&](const Matrix& fp) {
    const FusionParams p = with(fp);
    const FusionBackward b = fusion_backward(p, features, fusion_forward(p, features), upstream);
    return pack(b.grads.trainable());
  };
  return finite_diff_check(loss, grad, flat, 1e-6);
}

double feature_gradcheck(const FusionParams& p, const std::vector<Matrix>& features0, const Matrix& upstream) {
  std::vector<const Matrix*> views;
  for (const auto& f : features0) views.push_back(&f);
  const Matrix flat = pack(views);
  auto with = [&](const Matrix& fp) {
    std::vector<Matrix> f = features0;
    std::vector<Matrix*> targets;
    for (auto& m : f) targets.push_back(&m);
    unpack(fp, targets);
    return f;
  };
  auto loss = [&](const Matrix& fp) { return linear_functional(fusion_forward(p, with(fp)).fused, upstream); };
  auto grad = [&](const Matrix& fp) {
    const auto f = with(fp);
    const FusionBackward b = fusion_backward(p, f, fusion_forward(p, f), upstream);
    std::vector<const Matrix*> g;
    for (const auto& m : b.feature_grads) g.push_back(&m);
    return pack(g);
  };
  return finite_diff_check(loss, grad, flat, 1e-6);
}

void set_identity_adapters(FusionParams& p) {
  for (auto& a : p.adapters) {
    a.weight = Matrix::identity(a.weight.rows());
    a.bias.fill(0.0);
  }
}

}  // namespace

TEST(FuseConcat, Examples) {
  const std::vector<Matrix> two{Matrix::from_rows({{1, 2}}), Matrix::from_rows({{3}})};
  EXPECT_EQ(fuse_concat(two), Matrix::from_rows({{1, 2, 3}}));
  const std::vector<Matrix> one{Matrix::from_rows({{4, 5}, {6, 7}})};
  EXPECT_EQ(fuse_concat(one), one[0]);

  RngStream rng(1);
  const auto src = random_sources(4, {3, 5, 2}, rng);
  const Matrix out = fuse_concat(src);
  EXPECT_EQ(out.cols(), 10u);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(out(r, 4), src[1](r, 1));

  const std::vector<Matrix> ragged{Matrix(2, 1), Matrix(3, 1)};
  EXPECT_THROW(fuse_concat(ragged), ContractError);
}

TEST(FuseElementwise, Examples) {
  const std::vector<Matrix> ab{Matrix::from_rows({{1, 2}}), Matrix::from_rows({{3, 4}})};
  EXPECT_EQ(fuse_elementwise(ab, ElementwiseMode::Sum), Matrix::from_rows({{4, 6}}));
  const Matrix v = Matrix::from_rows({{0.5, -3, 7}});
  Matrix ones(1, 3);
  ones.fill(1.0);
  const std::vector<Matrix> with_ones{v, ones};
  EXPECT_EQ(fuse_elementwise(with_ones, ElementwiseMode::Product), v);
  const std::vector<Matrix> cancel{v, -1.0 * v};
  EXPECT_EQ(fuse_elementwise(cancel, ElementwiseMode::Sum), Matrix(1, 3));
  const std::vector<Matrix> uneven{Matrix(1, 2), Matrix(1, 3)};
  EXPECT_THROW(fuse_elementwise(uneven, ElementwiseMode::Sum), ContractError);
}

TEST(FuseElementwise, PermutationInvariance) {
  RngStream rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + rng.next_index(3);
    auto src = random_sources(5, std::vector<std::size_t>(m, 4), rng);
    auto shuffled = src;
    rng.shuffle(std::span<Matrix>(shuffled));
    for (auto mode : {ElementwiseMode::Sum, ElementwiseMode::Product}) {
      EXPECT_LE(max_abs_diff(fuse_elementwise(src, mode), fuse_elementwise(shuffled, mode)), 1e-14);
    }
  }
}

TEST(Pca, RankOneLine) {
  Matrix x(20, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    x(i, 0) = static_cast<double>(i) - 7.0;
    x(i, 1) = 2.0 * x(i, 0);
  }
  const FusionParams p = pca_fit(x, 2);
  const double s5 = std::sqrt(5.0);
  EXPECT_NEAR(p.pca.components(0, 0), 1.0 / s5, 1e-12);
  EXPECT_NEAR(p.pca.components(1, 0), 2.0 / s5, 1e-12);
  EXPECT_NEAR(p.pca.eigenvalues[1], 0.0, 1e-10);
  EXPECT_THROW(pca_fit(x, 3), ContractError);
}

TEST(Pca, FullRankReconstructionAndOrthonormality) {
  RngStream rng(4);
  Matrix x = random_matrix(30, 5, rng);
  for (std::size_t i = 0; i < 30; ++i) x(i, 3) += 2.0 * x(i, 0);
  const FusionParams p = pca_fit(x, 5);
  const Matrix& v = p.pca.components;
  EXPECT_LE(max_abs_diff(matmul_tn(v, v), Matrix::identity(5)), 1e-9);
  const Matrix z = pca_transform(p.pca, x);
  const Matrix back = matmul_nt(z, v);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(back(i, j), x(i, j) - p.pca.mean(0, j), 1e-9);

  for (std::size_t k = 0; k < 5; ++k) {
    if (k + 1 < 5) {
      EXPECT_GE(p.pca.eigenvalues[k], p.pca.eigenvalues[k + 1]);
    }
    std::size_t big = 0;
    for (std::size_t r = 1; r < 5; ++r)
      if (std::abs(v(r, k)) > std::abs(v(big, k))) big = r;
    EXPECT_GT(v(big, k), 0.0);
  }
}

TEST(Pca, ProjectionHasDiagonalCovariance) {
  RngStream rng(6);
  Matrix x = random_matrix(200, 4, rng);
  for (std::size_t i = 0; i < 200; ++i) x(i, 1) += 0.8 * x(i, 2) - 0.3 * x(i, 0);
  const FusionParams p = pca_fit(x, 3);
  const Matrix z = pca_transform(p.pca, x);
  const Matrix cov = matmul_tn(z, z);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      const double expected = a == b ? p.pca.eigenvalues[a] : 0.0;
      EXPECT_NEAR(cov(a, b) / 199.0, expected, a == b ? 1e-9 : 1e-8);
    }
}

TEST(Pca, IsotropicEigenvalueRatio) {
  RngStream rng(8);
  Matrix x(10000, 2);
  for (double& v : x.values()) v = rng.next_normal();
  const FusionParams p = pca_fit(x, 2);
  EXPECT_NEAR(p.pca.eigenvalues[0] / p.pca.eigenvalues[1], 1.0, 0.1);
}

TEST(SymmetricEigen, MatchesDefinition) {
  RngStream rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.next_index(6);
    Matrix a = random_matrix(n, n, rng);
    const Matrix s = a + transpose(a);
    const SymmetricEigen e = symmetric_eigen(s);
    for (std::size_t k = 0; k < n; ++k) {
      const Matrix col = select_cols(e.vectors, k, k + 1);
      const Matrix av = matmul(s, col);
      for (std::size_t r = 0; r < n; ++r) EXPECT_NEAR(av(r, 0), e.values[k] * col(r, 0), 1e-10);
    }
  }
}

TEST(Linear, ForwardAndBackward) {
  RngStream rng(12);
  FusionShape shape;
  shape.out_dim = 3;
  const FusionParams p = fusion_init(FusionKind::Linear, {2, 4}, shape, rng);
  const auto src = random_sources(5, {2, 4}, rng);
  const FusionForward f = fusion_forward(p, src);
  const Matrix expected = affine(hconcat(src), p.projection.weight, p.projection.bias);
  EXPECT_LE(max_abs_diff(f.fused, expected), 1e-15);
  const Matrix up = random_matrix(5, 3, rng);
  const FusionBackward b = fusion_backward(p, src, f, up);
  EXPECT_LE(max_abs_diff(b.grads.projection.weight, matmul_tn(hconcat(src), up)), 1e-15);
  EXPECT_LT(param_gradcheck(p, src, up), 1e-4);
  EXPECT_LT(feature_gradcheck(p, src, up), 1e-4);
}

TEST(Attention, IdenticalSourcesGiveUniformWeights) {
  RngStream rng(14);
  FusionShape shape;
  shape.common_dim = 4;
  shape.attention_dim = 3;
  FusionParams p = fusion_init(FusionKind::Attention, {4, 4, 4}, shape, rng);
  set_identity_adapters(p);
  const Matrix h = random_matrix(6, 4, rng);
  const std::vector<Matrix> src{h, h, h};
  const FusionForward f = fusion_forward(p, src);
  for (const auto& a : f.aux)
    for (double v : a.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_LE(max_abs_diff(f.fused, h), 1e-15);
  EXPECT_NEAR(mean_attention_entropy(f), std::log(3.0), 1e-12);
}

TEST(Attention, SingleSourceIsIdentity) {
  RngStream rng(15);
  FusionShape shape;
  shape.common_dim = 3;
  FusionParams p = fusion_init(FusionKind::Attention, {3}, shape, rng);
  set_identity_adapters(p);
  const std::vector<Matrix> src{random_matrix(4, 3, rng)};
  const FusionForward f = fusion_forward(p, src);
  for (double v : f.aux[0].values()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(f.fused, src[0]);
}

TEST(Attention, WeightsAreDistributions) {
  RngStream rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    FusionShape shape;
    shape.common_dim = 1 + rng.next_index(5);
    shape.attention_dim = 1 + rng.next_index(5);
    const std::vector<std::size_t> dims{1 + rng.next_index(4), 1 + rng.next_index(4), 1 + rng.next_index(4)};
    const FusionParams p = fusion_init(FusionKind::Attention, dims, shape, rng);
    const FusionForward f = fusion_forward(p, random_sources(7, dims, rng));
    for (std::size_t c = 0; c < f.aux[0].size(); ++c) {
      double s = 0.0;
      for (const auto& a : f.aux) {
        EXPECT_GE(a.values()[c], 0.0);
        s += a.values()[c];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Attention, FiniteDifference) {
  RngStream rng(17);
  FusionShape shape;
  shape.common_dim = 4;
  shape.attention_dim = 5;
  const std::vector<std::size_t> dims{4, 4, 4};
  const FusionParams p = fusion_init(FusionKind::Attention, dims, shape, rng);
  const auto src = random_sources(6, dims, rng);
  const Matrix up = random_matrix(6, 4, rng);
  EXPECT_LT(param_gradcheck(p, src, up), 1e-4);
  EXPECT_LT(feature_gradcheck(p, src, up), 1e-4);
}

TEST(Gated, SaturatedGatesSelectFirstSource) {
  RngStream rng(18);
  FusionShape shape;
  shape.common_dim = 3;
  FusionParams p = fusion_init(FusionKind::Gated, {3, 3}, shape, rng);
  set_identity_adapters(p);
  p.gates[0].weight.fill(0.0);
  p.gates[0].bias.fill(30.0);
  p.gates[1].weight.fill(0.0);
  p.gates[1].bias.fill(-30.0);
  const auto src = random_sources(5, {3, 3}, rng);
  const FusionForward f = fusion_forward(p, src);
  EXPECT_LE(max_abs_diff(f.fused, 0.5 * src[0]), 1e-9);
  EXPECT_NEAR(mean_gate_openness(f), 0.5, 1e-9);
}

TEST(Gated, FiniteDifference) {
  RngStream rng(19);
  FusionShape shape;
  shape.common_dim = 3;
  const std::vector<std::size_t> dims{2, 4, 3};
  const FusionParams p = fusion_init(FusionKind::Gated, dims, shape, rng);
  const auto src = random_sources(6, dims, rng);
  const Matrix up = random_matrix(6, 3, rng);
  EXPECT_LT(param_gradcheck(p, src, up), 1e-4);
  EXPECT_LT(feature_gradcheck(p, src, up), 1e-4);
}

TEST(Fusion, AllKindsFiniteDifferenceOnRandomDraws) {
  RngStream rng(20);
  for (auto kind : {FusionKind::Sum, FusionKind::Product, FusionKind::Linear, FusionKind::Attention,
                    FusionKind::Gated, FusionKind::Concat}) {
    for (int draw = 0; draw < 5; ++draw) {
      FusionShape shape;
      shape.common_dim = 1 + rng.next_index(4);
      shape.attention_dim = 1 + rng.next_index(4);
      shape.out_dim = 1 + rng.next_index(4);
      std::vector<std::size_t> dims(1 + rng.next_index(3));
      for (auto& d : dims) d = 1 + rng.next_index(4);
      const FusionParams p = fusion_init(kind, dims, shape, rng);
      const auto src = random_sources(1 + rng.next_index(5), dims, rng);
      const Matrix up = random_matrix(src[0].rows(), p.output_dim(), rng);
      EXPECT_EQ(fusion_forward(p, src).fused.cols(), p.output_dim());
      if (!p.trainable().empty()) {
        EXPECT_LT(param_gradcheck(p, src, up), 1e-4) << to_string(kind);
      }
      EXPECT_LT(feature_gradcheck(p, src, up), 1e-4) << to_string(kind);
    }
  }
}

TEST(Fusion, ShapeErrorsAndNames) {
  RngStream rng(21);
  const FusionParams p = fusion_init(FusionKind::Gated, {2, 3}, FusionShape{}, rng);
  const std::vector<Matrix> wrong{Matrix(2, 2), Matrix(2, 4)};
  EXPECT_THROW(fusion_forward(p, wrong), ContractError);
  for (auto k : {FusionKind::Concat, FusionKind::Sum, FusionKind::Product, FusionKind::Linear,
                 FusionKind::Pca, FusionKind::Attention, FusionKind::Gated}) {
    EXPECT_EQ(parse_fusion_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_fusion_kind("cca"), ContractError);
}

TEST(Fusion, PcaSourcesAndBackward) {
  RngStream rng(22);
  FusionParams p = fusion_init(FusionKind::Pca, {3, 2}, FusionShape{}, rng);
  const auto src = random_sources(12, {3, 2}, rng);
  pca_fit_sources(p, src, 2);
  EXPECT_EQ(p.output_dim(), 2u);
  const Matrix up = random_matrix(12, 2, rng);
  EXPECT_LT(feature_gradcheck(p, src, up), 1e-4);
}
