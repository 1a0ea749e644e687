#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "ddic/error.hpp"
#include "ddic/matrix.hpp"
#include "test_util.hpp"

using ddic::Matrix;

TEST(PairwiseSqDists, IdenticalPointsAreZero) {
  EXPECT_EQ(ddic::pairwise_sq_dists(Matrix{{0, 0}}, Matrix{{0, 0}}), (Matrix{{0}}));
}

TEST(PairwiseSqDists, ThreeFourFive) {
  EXPECT_EQ(ddic::pairwise_sq_dists(Matrix{{0, 0}}, Matrix{{3, 4}}), (Matrix{{25}}));
}

TEST(PairwiseSqDists, MatchesNaiveDoubleLoop) {
  const Matrix x = ddic::testing::random_matrix(3, 2, 11);
  const Matrix y = ddic::testing::random_matrix(4, 2, 12);
  const Matrix d = ddic::pairwise_sq_dists(x, y);
  ASSERT_EQ(d.rows(), 3u);
  ASSERT_EQ(d.cols(), 4u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double dx = x(i, 0) - y(j, 0);
      const double dy = x(i, 1) - y(j, 1);
      EXPECT_NEAR(d(i, j), dx * dx + dy * dy, 1e-12);
    }
  }
}

TEST(PairwiseSqDists, SelfComparisonHasExactZeroDiagonal) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = ddic::testing::random_matrix(7, 5, seed, -100, 100);
    const Matrix d = ddic::pairwise_sq_dists(x, x);
    for (std::size_t i = 0; i < 7; ++i) {
      EXPECT_EQ(d(i, i), 0.0);
      for (std::size_t j = 0; j < 7; ++j) EXPECT_GE(d(i, j), 0.0);
    }
  }
}

TEST(PairwiseSqDists, ColumnMismatchIsShapeError) {
  EXPECT_THROW(ddic::pairwise_sq_dists(Matrix(2, 3), Matrix(2, 2)), ddic::ShapeError);
}

TEST(LogSumExpRows, Examples) {
  EXPECT_NEAR(ddic::logsumexp_rows(Matrix{{0, 0}})[0], std::log(2.0), 1e-15);
  for (double x : {-1e8, -3.5, 0.0, 42.0, 1e8}) {
    EXPECT_EQ(ddic::logsumexp_rows(Matrix{{x}})[0], x);
  }
  const double big = ddic::logsumexp_rows(Matrix{{1000, 1000}})[0];
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 1000.0 + std::log(2.0), 1e-12);
  EXPECT_NEAR(ddic::logsumexp_rows(Matrix{{-1e8, -1e8}})[0], -1e8 + std::log(2.0), 1e-6);
}

TEST(LogSumExpRows, EmptyIsShapeError) {
  EXPECT_THROW(ddic::logsumexp_rows(Matrix{}), ddic::ShapeError);
  EXPECT_THROW(ddic::logsumexp_rows(Matrix(2, 0)), ddic::ShapeError);
}

TEST(MatrixOps, MatmulVariantsAgree) {
  const Matrix a = ddic::testing::random_matrix(4, 3, 1);
  const Matrix b = ddic::testing::random_matrix(3, 5, 2);
  const Matrix ab = ddic::matmul(a, b);
  EXPECT_LT(ddic::testing::max_abs_diff(ab, ddic::matmul_tn(ddic::transpose(a), b)), 1e-14);
  EXPECT_LT(ddic::testing::max_abs_diff(ab, ddic::matmul_nt(a, ddic::transpose(b))), 1e-14);
  EXPECT_THROW(ddic::matmul(a, a), ddic::ShapeError);
}

TEST(MatrixOps, ConstructionChecksLength) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ddic::ShapeError);
  Matrix nan_matrix{{1, std::numeric_limits<double>::quiet_NaN()}};
  EXPECT_FALSE(ddic::all_finite(nan_matrix));
  EXPECT_TRUE(ddic::bitwise_equal(nan_matrix, nan_matrix));
}

TEST(Matrix, StorageIsCacheLineAligned) {
  for (std::size_t n : {1u, 3u, 17u, 1000u}) {
    const Matrix m(n, 3);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(m.data()) % 64, 0u) << n;
    const Matrix copy = m;
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(copy.data()) % 64, 0u);
  }
}
