#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ddic/autodiff.hpp"
#include "ddic/matrix.hpp"

// Entropy-regularized optimal transport between discrete distributions,
// solved with log-domain Sinkhorn iterations on the dual potentials, and the
// debiased Sinkhorn divergence built on top of it. Ground cost is always the
// squared Euclidean distance between support points.
namespace ddic::ot {

inline constexpr std::size_t kDefaultMaxIters = 1000;
inline constexpr std::size_t kDefaultUnrollIters = 200;
inline constexpr double kDefaultTol = 1e-6;

struct TransportPlan {
  Matrix plan;
  std::vector<double> row_marginal;
  std::vector<double> col_marginal;
};

struct SinkhornResult {
  // <F, C> - eps * h(F) with h(F) = -sum f log f
  double value = 0.0;
  TransportPlan plan;
  std::vector<double> dual_f;
  std::vector<double> dual_g;
  std::size_t iterations_used = 0;
  // L1 violation of both marginals of `plan` is below tol.
  bool converged = false;
};

std::vector<double> uniform_weights(std::size_t n);

// Largest L1 violation between the plan's row/column sums and a, b.
double marginal_violation(const TransportPlan& plan);

// Throws ContractError unless a, b lie on their simplices, eps > 0 and the
// cost is finite, non-negative and sized a.size() x b.size().
SinkhornResult entropic_ot(std::span<const double> a, std::span<const double> b,
                           const Matrix& cost, double eps,
                           std::size_t max_iters = kDefaultMaxIters, double tol = kDefaultTol);

// OT(x, y) - (OT(x, x) + OT(y, y)) / 2 with uniform weights on the rows.
double sinkhorn_divergence(const Matrix& x, const Matrix& y, double eps,
                           std::size_t max_iters = kDefaultMaxIters, double tol = kDefaultTol);

// Entropic OT value under uniform weights as a differentiable function of
// the cost matrix. The backward pass replays every Sinkhorn iteration that
// the forward pass executed, so the gradient is exact for the returned value
// whether or not the iterations converged.
ad::Var entropic_ot_node(const ad::Var& cost, double eps,
                         std::size_t max_iters = kDefaultUnrollIters, double tol = kDefaultTol);

// Debiased divergence between two point clouds as a graph node.
ad::Var sinkhorn_loss_node(const ad::Var& x, const ad::Var& y, double eps,
                           std::size_t unroll_iters = kDefaultUnrollIters, double tol = kDefaultTol);

}  // namespace ddic::ot
