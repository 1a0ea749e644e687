#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "ddic/error.hpp"
#include "ddic/ot.hpp"
#include "ot_oracles.hpp"
#include "test_util.hpp"

namespace ad = ddic::ad;
namespace ot = ddic::ot;
using ddic::Matrix;
using ddic::testing::random_matrix;

namespace {

double primal_objective(const Matrix& plan, const Matrix& cost, double eps) {
  double v = 0.0;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    v += plan.values()[k] * cost.values()[k] + eps * ddic::testing::xlogx(plan.values()[k]);
  }
  return v;
}

}  // namespace

TEST(EntropicOt, SinglePointPlanIsForced) {
  const std::vector<double> w{1.0};
  const auto r = ot::entropic_ot(w, w, Matrix{{2.75}}, 0.01);
  EXPECT_EQ(r.plan.plan, (Matrix{{1.0}}));
  EXPECT_NEAR(r.value, 2.75, 1e-12);
  EXPECT_TRUE(r.converged);
}

TEST(EntropicOt, TwoByTwoMatchesGridOracle) {
  const Matrix cost{{0, 1}, {1, 0}};
  const auto w = ot::uniform_weights(2);
  const auto r = ot::entropic_ot(w, w, cost, 0.01);
  const auto oracle = ddic::testing::ot_2x2_grid_oracle(cost, 0.01);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value, oracle.value, 1e-6);
  EXPECT_LT(ddic::testing::max_abs_diff(r.plan.plan, oracle.plan), 1e-6);
}

TEST(EntropicOt, ThreeByThreeMatchesNestedGridOracle) {
  const Matrix cost = random_matrix(3, 3, 7, 0.0, 1.0);
  const auto w = ot::uniform_weights(3);
  const auto r = ot::entropic_ot(w, w, cost, 0.05);
  const auto oracle = ddic::testing::ot_3x3_grid_oracle(cost, 0.05);
  EXPECT_NEAR(r.value, oracle.value, 1e-4);
  EXPECT_LT(ddic::testing::max_abs_diff(r.plan.plan, oracle.plan), 1e-3);
}

TEST(EntropicOt, RandomThreeByThreeMeetsMarginals) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix cost = random_matrix(3, 3, seed, 0.0, 1.0);
    const auto w = ot::uniform_weights(3);
    const auto r = ot::entropic_ot(w, w, cost, 0.05, 1000000);
    ASSERT_TRUE(r.converged) << seed;
    EXPECT_LT(ot::marginal_violation(r.plan), 1e-6);
    for (double v : r.plan.plan.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(EntropicOt, ValueIsPrimalObjectiveOfReturnedPlan) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = random_matrix(6, 3, seed);
    const Matrix y = random_matrix(4, 3, seed + 50);
    const Matrix cost = ddic::pairwise_sq_dists(x, y);
    const auto r = ot::entropic_ot(ot::uniform_weights(6), ot::uniform_weights(4), cost, 0.05);
    EXPECT_NEAR(r.value, primal_objective(r.plan.plan, cost, 0.05), 1e-8);
  }
}

TEST(EntropicOt, NonUniformAndZeroWeights) {
  const std::vector<double> a{0.2, 0.0, 0.8};
  const std::vector<double> b{0.5, 0.5};
  const Matrix cost = random_matrix(3, 2, 3, 0.0, 1.0);
  const auto r = ot::entropic_ot(a, b, cost, 0.1);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.plan.plan(1, 0), 0.0);
  EXPECT_EQ(r.plan.plan(1, 1), 0.0);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_NEAR(r.value, primal_objective(r.plan.plan, cost, 0.1), 1e-8);
}

TEST(EntropicOt, ReproducibleBitForBit) {
  const Matrix cost = random_matrix(5, 7, 9, 0.0, 2.0);
  const auto a = ot::uniform_weights(5);
  const auto b = ot::uniform_weights(7);
  const auto r1 = ot::entropic_ot(a, b, cost, 0.01);
  const auto r2 = ot::entropic_ot(a, b, cost, 0.01);
  EXPECT_EQ(std::memcmp(&r1.value, &r2.value, sizeof(double)), 0);
  EXPECT_TRUE(ddic::bitwise_equal(r1.plan.plan, r2.plan.plan));
}

TEST(EntropicOt, ContractErrors) {
  const Matrix cost{{0, 1}, {1, 0}};
  const std::vector<double> good{0.5, 0.5};
  const std::vector<double> bad{0.5, 0.6};
  const std::vector<double> negative{1.5, -0.5};
  EXPECT_THROW(ot::entropic_ot(bad, good, cost, 0.1), ddic::ContractError);
  EXPECT_THROW(ot::entropic_ot(good, negative, cost, 0.1), ddic::ContractError);
  EXPECT_THROW(ot::entropic_ot(good, good, cost, 0.0), ddic::ContractError);
  EXPECT_THROW(ot::entropic_ot(good, good, cost, -1.0), ddic::ContractError);
  EXPECT_THROW(ot::entropic_ot(good, good, Matrix{{0, -1}, {1, 0}}, 0.1), ddic::ContractError);
  EXPECT_THROW(ot::entropic_ot(good, good, Matrix(2, 3), 0.1), ddic::ShapeError);
}

TEST(EntropicOt, IterationCapReportsNotConverged) {
  const Matrix cost = random_matrix(20, 20, 1, 0.0, 5.0);
  const auto w = ot::uniform_weights(20);
  const auto r = ot::entropic_ot(w, w, cost, 0.001, 2);
  EXPECT_EQ(r.iterations_used, 2u);
  EXPECT_FALSE(r.converged);
}

TEST(SinkhornDivergence, ZeroAtIdenticalClouds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix x = random_matrix(6, 3, seed, 0.0, 1.0);
    EXPECT_NEAR(ot::sinkhorn_divergence(x, x, 0.01), 0.0, 1e-8);
  }
}

TEST(SinkhornDivergence, SinglePoints) {
  EXPECT_NEAR(ot::sinkhorn_divergence(Matrix{{0, 0}}, Matrix{{3, 4}}, 0.01), 25.0, 1e-12);
}

TEST(SinkhornDivergence, SymmetricAndNonNegative) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Matrix x = random_matrix(5, 3, 2 * seed, 0.0, 1.0);
    const Matrix y = random_matrix(5, 3, 2 * seed + 1, 0.0, 1.0);
    const double xy = ot::sinkhorn_divergence(x, y, 0.01);
    const double yx = ot::sinkhorn_divergence(y, x, 0.01);
    EXPECT_GE(xy, -1e-8) << seed;
    EXPECT_LT(std::abs(xy - yx), 1e-10) << seed;
  }
}

TEST(SinkhornDivergence, ShapeErrors) {
  EXPECT_THROW(ot::sinkhorn_divergence(Matrix(2, 3), Matrix(2, 2), 0.1), ddic::ShapeError);
  EXPECT_THROW(ot::sinkhorn_divergence(Matrix(0, 3), Matrix(2, 3), 0.1), ddic::ShapeError);
}

TEST(SinkhornLossNode, ValueMatchesDivergence) {
  const Matrix x = random_matrix(5, 2, 31, 0.0, 1.0);
  const Matrix y = random_matrix(4, 2, 32, 0.0, 1.0);
  const double direct = ot::sinkhorn_divergence(x, y, 0.05);
  const double node = ot::sinkhorn_loss_node(ad::constant(x), ad::parameter(y), 0.05, 1000).scalar();
  EXPECT_NEAR(node, direct, 1e-12);
}

TEST(SinkhornLossNode, GradientVanishesAtIdenticalClouds) {
  const Matrix x = random_matrix(6, 3, 4, 0.0, 1.0);
  ad::Var y = ad::parameter(x);
  ad::backward(ot::sinkhorn_loss_node(ad::constant(x), y, 0.01, 1000));
  const Matrix grad = y.grad();
  for (double g : grad.values()) EXPECT_LT(std::abs(g), 1e-6);
}

TEST(SinkhornLossNode, SinglePointClosedForm) {
  for (double yv : {-1.5, 0.3, 2.0}) {
    ad::Var y = ad::parameter(Matrix{{yv}});
    ad::Var loss = ot::sinkhorn_loss_node(ad::constant(Matrix{{0}}), y, 0.01);
    ad::backward(loss);
    EXPECT_NEAR(loss.scalar(), yv * yv, 1e-12);
    EXPECT_NEAR(y.grad()(0, 0), 2 * yv, 1e-10);
  }
}

TEST(SinkhornLossNode, GradCheckRandomPair) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Matrix x = random_matrix(4, 3, 40 + seed, 0.0, 1.0);
    const Matrix y = random_matrix(4, 3, 50 + seed, 0.0, 1.0);
    auto wrt_y = [&](const ad::Var& v) { return ot::sinkhorn_loss_node(ad::constant(x), v, 0.01, 200); };
    auto wrt_x = [&](const ad::Var& v) { return ot::sinkhorn_loss_node(v, ad::constant(y), 0.01, 200); };
    EXPECT_LT(ad::grad_check(wrt_y, y, 1e-5), 1e-4);
    EXPECT_LT(ad::grad_check(wrt_x, x, 1e-5), 1e-4);
  }
}

// The fused reverse pass and a graph of elementary primitives must agree on
// both value and gradient when forced through the same number of iterations.
TEST(SinkhornLossNode, FusedUnrollMatchesComposedUnroll) {
  const double eps = 0.05;
  const std::size_t iters = 25;
  const Matrix x0 = random_matrix(5, 2, 61, 0.0, 1.0);
  const Matrix y0 = random_matrix(3, 2, 62, 0.0, 1.0);

  ad::Var xf = ad::parameter(x0), yf = ad::parameter(y0);
  ad::Var fused = ot::entropic_ot_node(ad::pairwise_sq_dists(xf, yf), eps, iters, 0.0);
  ad::backward(fused);

  ad::Var xc = ad::parameter(x0), yc = ad::parameter(y0);
  ad::Var composed = ddic::testing::composed_sinkhorn_value(xc, yc, eps, iters);
  ad::backward(composed);

  EXPECT_NEAR(fused.scalar(), composed.scalar(), 1e-12);
  EXPECT_LT(ddic::testing::max_abs_diff(xf.grad(), xc.grad()), 1e-10);
  EXPECT_LT(ddic::testing::max_abs_diff(yf.grad(), yc.grad()), 1e-10);
}
