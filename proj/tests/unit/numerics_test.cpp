#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "oracles/jacobi.hpp"
#include "oracles/reference_values.hpp"
#include "refit/error.hpp"
#include "refit/numerics.hpp"

using namespace refit;

TEST(SplitMix, MatchesReferenceTraceSeed0) {
  Rng rng(0);
  for (auto expected : oracle::kSplitMixSeed0) EXPECT_EQ(rng.next(), expected);
}

TEST(SplitMix, ValuePassingFormMatchesReference) {
  Rng rng(42);
  for (auto expected : oracle::kSplitMixSeed42) {
    auto [next_rng, value] = prng_next(rng);
    EXPECT_EQ(value, expected);
    rng = next_rng;
  }
}

TEST(SplitMix, UniformAndBelowStayInRange) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(13), 13u);
  }
}

TEST(SplitMix, BelowIsRoughlyUniform) {
  Rng rng(3);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) ++counts[rng.below(6)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(DeriveSeed, DependsOnRoleAndIndex) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t role : {1ULL, 2ULL})
    for (std::uint64_t i = 0; i < 50; ++i) seen.insert(derive_seed(9, role, i));
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Fnv, MatchesReferenceVectors) {
  for (const auto& [text, hash] : oracle::kFnv1a64) EXPECT_EQ(fnv1a64(text), hash) << text;
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> z(n), shifted(n);
    const double c = rng.uniform(-50, 50);
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = rng.uniform(-30, 30);
      shifted[i] = z[i] + c;
    }
    const auto p = softmax(z), q = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += p[i];
      ASSERT_LT(std::abs(p[i] - q[i]), 1e-12);
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Softmax, HandlesLargeLogits) {
  const std::vector<double> z = {1000.0, 1000.0};
  const auto p = softmax(z);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(softmax(std::vector<double>{}), Error);
  const std::vector<double> bad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  try {
    softmax(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "non-finite input");
  }
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.3, 0.7, 0.7}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
}

TEST(GradCheck, PolynomialsAreExact) {
  Rng rng(5);
  // f(x) = sum_i c_i x_i^3 + x_0 x_1
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> c(4), x(4);
    for (int i = 0; i < 4; ++i) {
      c[i] = rng.uniform(-2, 2);
      x[i] = rng.uniform(-2, 2);
    }
    auto f = [&](std::span<const double> v) {
      double s = v[0] * v[1];
      for (int i = 0; i < 4; ++i) s += c[i] * v[i] * v[i] * v[i];
      return s;
    };
    auto g = [&](std::span<const double> v) {
      std::vector<double> out(4);
      for (int i = 0; i < 4; ++i) out[i] = 3 * c[i] * v[i] * v[i];
      out[0] += v[1];
      out[1] += v[0];
      return out;
    };
    EXPECT_LT(grad_check(f, g, x), 1e-7);
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  auto f = [](std::span<const double> v) { return v[0] * v[0]; };
  auto g = [](std::span<const double> v) { return std::vector<double>{v[0]}; };
  EXPECT_GT(grad_check(f, g, std::vector<double>{2.0}), 0.5);
}

TEST(GradCheck, NonFiniteNeighbourhoodThrows) {
  auto f = [](std::span<const double> v) { return std::log(v[0]); };
  auto g = [](std::span<const double> v) { return std::vector<double>{1.0 / v[0]}; };
  EXPECT_THROW(grad_check(f, g, std::vector<double>{0.0}), Error);
}

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (auto& v : m.data()) v = rng.uniform(-1, 1);
  return m;
}

}  // namespace

TEST(Pca, LineYEquals2X) {
  Matrix pts(5, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    pts(i, 0) = static_cast<double>(i) - 1.0;
    pts(i, 1) = 2.0 * pts(i, 0);
  }
  const auto r = top2_pca(pts);
  EXPECT_NEAR(r.components(0, 0), 1.0 / std::sqrt(5.0), 1e-9);
  EXPECT_NEAR(r.components(0, 1), 2.0 / std::sqrt(5.0), 1e-9);
  EXPECT_NEAR(r.variances[1], 0.0, 1e-12);
  EXPECT_EQ(r.components(1, 0), 0.0);
  EXPECT_EQ(r.components(1, 1), 0.0);
}

TEST(Pca, IdenticalPointsGiveZeros) {
  Matrix pts(4, 3, 0.25);
  const auto r = top2_pca(pts);
  EXPECT_EQ(r.variances[0], 0.0);
  EXPECT_EQ(r.variances[1], 0.0);
  for (double v : r.coords.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pca, SinglePointAndNarrowInput) {
  const auto r = top2_pca(Matrix(1, 3, 2.0));
  for (double v : r.coords.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(top2_pca(Matrix(5, 1)), Error);
  EXPECT_THROW(top2_pca(Matrix(0, 3)), Error);
}

TEST(Pca, MatchesJacobiOracleOnRandom10x4) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = random_matrix(rng, 10, 4);
    std::vector<std::vector<double>> rows(10, std::vector<double>(4));
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 4; ++j) rows[i][j] = x(i, j);
    const auto eig = oracle::jacobi_eigen(oracle::covariance(rows));
    const auto r = top2_pca(x);

    std::vector<double> mu(4, 0.0);
    for (const auto& row : rows)
      for (int j = 0; j < 4; ++j) mu[j] += row[j] / 10.0;
    for (int k = 0; k < 2; ++k) {
      EXPECT_NEAR(r.variances[k], eig.values[k], 1e-8);
      double sign_dot = 0.0;
      for (int j = 0; j < 4; ++j) sign_dot += r.components(k, j) * eig.vectors[k][j];
      const double s = sign_dot < 0 ? -1.0 : 1.0;
      for (int j = 0; j < 4; ++j) EXPECT_NEAR(r.components(k, j), s * eig.vectors[k][j], 1e-8);
      for (std::size_t i = 0; i < 10; ++i) {
        double proj = 0.0;
        for (int j = 0; j < 4; ++j) proj += (rows[i][j] - mu[j]) * eig.vectors[k][j];
        EXPECT_NEAR(r.coords(i, k), s * proj, 1e-8);
      }
    }
  }
}

TEST(Pca, VariancesOrderedAndCoordinatesCentred) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix x = random_matrix(rng, 3 + rng.below(20), 2 + rng.below(6));
    const auto r = top2_pca(x);
    EXPECT_GE(r.variances[0], r.variances[1]);
    EXPECT_GE(r.variances[1], 0.0);
    for (int k = 0; k < 2; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) s += r.coords(i, k);
      EXPECT_LT(std::abs(s / static_cast<double>(x.rows())), 1e-9);
    }
  }
}

TEST(Pca, SignConventionLargestEntryPositive) {
  Rng rng(9);
  const auto r = top2_pca(random_matrix(rng, 12, 5));
  for (int k = 0; k < 2; ++k) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < 5; ++j)
      if (std::abs(r.components(k, j)) > std::abs(r.components(k, best))) best = j;
    EXPECT_GT(r.components(k, best), 0.0);
  }
}

TEST(Pca, WideInputMatchesOracle) {
  // More dimensions than points, as in model embeddings.
  Rng rng(10);
  const Matrix x = random_matrix(rng, 6, 30);
  std::vector<std::vector<double>> rows(6, std::vector<double>(30));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 30; ++j) rows[i][j] = x(i, j);
  const auto eig = oracle::jacobi_eigen(oracle::covariance(rows));
  const auto r = top2_pca(x);
  EXPECT_NEAR(r.variances[0], eig.values[0], 1e-8);
  EXPECT_NEAR(r.variances[1], eig.values[1], 1e-8);
}
