#include "ddic/ot.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "ddic/error.hpp"

namespace ddic::ot {

namespace {

using ConstArray = Eigen::Map<const Eigen::ArrayXd>;
using MutArray = Eigen::Map<Eigen::ArrayXd>;

// exp() arguments are clamped here. Anything smaller contributes below
// 1e-217 relative to the leading term, and letting it through produces
// subnormals that slow the vectorized exp by an order of magnitude.
constexpr double kMinExponent = -500.0;

MutArray arr(AlignedVector& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }
ConstArray arr_row(const Matrix& m, std::size_t r) {
  return {m.data() + r * m.cols(), static_cast<Eigen::Index>(m.cols())};
}
MutArray arr_row(Matrix& m, std::size_t r) {
  return {m.data() + r * m.cols(), static_cast<Eigen::Index>(m.cols())};
}

AlignedVector log_weights(std::span<const double> w) {
  AlignedVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = w[i] > 0.0 ? std::log(w[i]) : -std::numeric_limits<double>::infinity();
  }
  return out;
}

// One run of log-domain Sinkhorn on a fixed cost. Keeps every potential it
// produced when asked to, which the reverse pass needs.
//
//   f_i <- -eps * LSE_j(log b_j + (g_j - C_ij) / eps)
//   g_j <- -eps * LSE_i(log a_i + (f_i - C_ij) / eps)
//
// starting from g = 0.
class LogSinkhorn {
 public:
  LogSinkhorn(std::span<const double> a, std::span<const double> b, const Matrix& cost, double eps)
      : a_(a.begin(), a.end()),
        b_(b.begin(), b.end()),
        log_a_(log_weights(a)),
        log_b_(log_weights(b)),
        eps_(eps),
        neg_cost_(-1.0 / eps * cost),
        neg_cost_t_(transpose(neg_cost_)) {}

  void run(std::size_t max_iters, double tol, bool keep_history) {
    const std::size_t n = a_.size();
    const std::size_t m = b_.size();
    AlignedVector f(n, 0.0);
    AlignedVector f_next(n);
    AlignedVector g(m, 0.0);
    if (keep_history) g_hist_.push_back(g);

    iterations_ = 0;
    while (iterations_ < max_iters) {
      update_f(g, f_next);
      if (iterations_ > 0) {
        // The current plan (f, g) has exact column sums; its row sums are
        // a_i exp((f_i - f_next_i) / eps).
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (a_[i] > 0.0) err += a_[i] * std::abs(std::exp((f[i] - f_next[i]) / eps_) - 1.0);
        }
        if (err < tol) break;
      }
      f.swap(f_next);
      update_g(f, g);
      ++iterations_;
      if (keep_history) {
        f_hist_.push_back(f);
        g_hist_.push_back(g);
      }
    }
    f_ = std::move(f);
    g_ = std::move(g);
  }

  // Rebuilds the plan from the final potentials and evaluates the value.
  SinkhornResult result(double tol) const {
    const std::size_t n = a_.size();
    const std::size_t m = b_.size();
    SinkhornResult r;
    r.plan.plan = plan();
    r.plan.row_marginal.assign(a_.begin(), a_.end());
    r.plan.col_marginal.assign(b_.begin(), b_.end());
    r.dual_f.assign(f_.begin(), f_.end());
    r.dual_g.assign(g_.begin(), g_.end());
    r.iterations_used = iterations_;
    r.converged = marginal_violation(r.plan) < tol;

    // <F, C> - eps h(F) = sum_ij F_ij (f_i + g_j + eps (log a_i + log b_j))
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (a_[i] <= 0.0) continue;
      auto row = r.plan.plan.row(i);
      for (std::size_t j = 0; j < m; ++j) {
        if (b_[j] <= 0.0 || row[j] == 0.0) continue;
        value += row[j] * (f_[i] + g_[j] + eps_ * (log_a_[i] + log_b_[j]));
      }
    }
    r.value = value;
    return r;
  }

  Matrix plan() const {
    const std::size_t n = a_.size();
    Matrix p(n, b_.size());
    AlignedVector w(b_.size());
    for (std::size_t j = 0; j < b_.size(); ++j) w[j] = log_b_[j] + g_[j] / eps_;
    for (std::size_t i = 0; i < n; ++i) {
      if (a_[i] <= 0.0) continue;
      arr_row(p, i) = (arr(w) + arr_row(neg_cost_, i) + (log_a_[i] + f_[i] / eps_)).max(kMinExponent).exp();
      for (std::size_t j = 0; j < b_.size(); ++j) {
        if (b_[j] <= 0.0) p(i, j) = 0.0;
      }
    }
    return p;
  }

  // d(value)/dC through every executed iteration. Needs keep_history.
  Matrix cost_gradient() const {
    const std::size_t n = a_.size();
    const std::size_t m = b_.size();
    const Matrix p = plan();

    // Terminal step: value = sum F (f + g + eps (la + lb)).
    Matrix grad_c(n, m);
    Matrix grad_ct(m, n);
    AlignedVector fbar(n, 0.0);
    AlignedVector gbar(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (a_[i] <= 0.0) continue;
      auto prow = p.row(i);
      auto grow = grad_c.row(i);
      for (std::size_t j = 0; j < m; ++j) {
        if (b_[j] <= 0.0 || prow[j] == 0.0) continue;
        const double w = prow[j] * (f_[i] + g_[j] + eps_ * (log_a_[i] + log_b_[j]) + eps_);
        grow[j] = prow[j] - w / eps_;
        fbar[i] += w / eps_;
        gbar[j] += w / eps_;
      }
    }

    AlignedVector u(n);
    AlignedVector w(m);
    for (std::size_t t = f_hist_.size(); t-- > 0;) {
      const AlignedVector& f = f_hist_[t];
      const AlignedVector& g = g_hist_[t + 1];
      const AlignedVector& g_before = g_hist_[t];

      // g^t = Tg(f^t): dg_j/df_i = -S_ij, dg_j/dC_ij = S_ij
      for (std::size_t i = 0; i < n; ++i) u[i] = log_a_[i] + f[i] / eps_;
      for (std::size_t j = 0; j < m; ++j) {
        if (gbar[j] == 0.0) continue;
        Eigen::ArrayXd s = (arr(u) + arr_row(neg_cost_t_, j) + g[j] / eps_).max(kMinExponent).exp();
        arr(fbar) -= gbar[j] * s;
        arr_row(grad_ct, j) += gbar[j] * s;
      }

      // f^t = Tf(g^{t-1}): df_i/dg_j = -R_ij, df_i/dC_ij = R_ij
      std::fill(gbar.begin(), gbar.end(), 0.0);
      for (std::size_t j = 0; j < m; ++j) w[j] = log_b_[j] + g_before[j] / eps_;
      for (std::size_t i = 0; i < n; ++i) {
        if (fbar[i] == 0.0) continue;
        Eigen::ArrayXd r = (arr(w) + arr_row(neg_cost_, i) + f[i] / eps_).max(kMinExponent).exp();
        arr(gbar) -= fbar[i] * r;
        arr_row(grad_c, i) += fbar[i] * r;
      }
      std::fill(fbar.begin(), fbar.end(), 0.0);
    }
    return grad_c + transpose(grad_ct);
  }

 private:
  void update_f(const AlignedVector& g, AlignedVector& f) const {
    AlignedVector w(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) w[j] = log_b_[j] + g[j] / eps_;
    for (std::size_t i = 0; i < f.size(); ++i) {
      auto x = arr(w) + arr_row(neg_cost_, i);
      const double mx = x.maxCoeff();
      f[i] = -eps_ * (mx + std::log((x - mx).max(kMinExponent).exp().sum()));
    }
  }

  void update_g(const AlignedVector& f, AlignedVector& g) const {
    AlignedVector u(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) u[i] = log_a_[i] + f[i] / eps_;
    for (std::size_t j = 0; j < g.size(); ++j) {
      auto x = arr(u) + arr_row(neg_cost_t_, j);
      const double mx = x.maxCoeff();
      g[j] = -eps_ * (mx + std::log((x - mx).max(kMinExponent).exp().sum()));
    }
  }

  AlignedVector a_, b_, log_a_, log_b_;
  double eps_;
  Matrix neg_cost_;    // -C / eps
  Matrix neg_cost_t_;  // its transpose, for column passes
  AlignedVector f_, g_;
  std::vector<AlignedVector> f_hist_;  // f^1 .. f^T
  std::vector<AlignedVector> g_hist_;  // g^0 .. g^T
  std::size_t iterations_ = 0;
};

void check_simplex(std::span<const double> w, const char* name) {
  if (w.empty()) throw ContractError(std::string(name) + ": empty weight vector");
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ContractError(std::string(name) + ": weights must be finite and non-negative");
    }
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) {
    throw ContractError(std::string(name) + ": weights sum to " + std::to_string(s) + ", not 1");
  }
}

void check_problem(std::span<const double> a, std::span<const double> b, const Matrix& cost,
                   double eps) {
  check_simplex(a, "entropic_ot a");
  check_simplex(b, "entropic_ot b");
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw ShapeError("entropic_ot: cost " + shape_string(cost) + " for marginals of size " +
                     std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ContractError("entropic_ot: eps must be > 0");
  for (double c : cost.values()) {
    if (!std::isfinite(c) || c < 0.0) {
      throw ContractError("entropic_ot: cost entries must be finite and non-negative");
    }
  }
}

void check_clouds(const Matrix& x, const Matrix& y, const char* what) {
  if (x.rows() == 0 || y.rows() == 0) throw ShapeError(std::string(what) + ": empty point cloud");
  if (x.cols() != y.cols()) {
    throw ShapeError(std::string(what) + ": " + shape_string(x) + " vs " + shape_string(y));
  }
}

}  // namespace

std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

double marginal_violation(const TransportPlan& plan) {
  const Matrix rs = row_sums(plan.plan);
  const Matrix cs = col_sums(plan.plan);
  double row_err = 0.0;
  double col_err = 0.0;
  for (std::size_t i = 0; i < plan.row_marginal.size(); ++i) {
    row_err += std::abs(rs(i, 0) - plan.row_marginal[i]);
  }
  for (std::size_t j = 0; j < plan.col_marginal.size(); ++j) {
    col_err += std::abs(cs(0, j) - plan.col_marginal[j]);
  }
  return std::max(row_err, col_err);
}

SinkhornResult entropic_ot(std::span<const double> a, std::span<const double> b,
                           const Matrix& cost, double eps, std::size_t max_iters, double tol) {
  check_problem(a, b, cost, eps);
  LogSinkhorn solver(a, b, cost, eps);
  solver.run(max_iters, tol, false);
  return solver.result(tol);
}

namespace {

// The cross term is always solved with the lexicographically smaller cloud
// on the row side, so swapping the arguments replays the same computation
// and the divergence is symmetric even short of convergence.
bool swap_sides(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) return y.rows() < x.rows();
  return std::lexicographical_compare(y.values().begin(), y.values().end(), x.values().begin(),
                                      x.values().end());
}

}  // namespace

double sinkhorn_divergence(const Matrix& x, const Matrix& y, double eps, std::size_t max_iters,
                           double tol) {
  check_clouds(x, y, "sinkhorn_divergence");
  if (swap_sides(x, y)) return sinkhorn_divergence(y, x, eps, max_iters, tol);
  const auto a = uniform_weights(x.rows());
  const auto b = uniform_weights(y.rows());
  const double xy = entropic_ot(a, b, pairwise_sq_dists(x, y), eps, max_iters, tol).value;
  const double xx = entropic_ot(a, a, pairwise_sq_dists(x, x), eps, max_iters, tol).value;
  const double yy = entropic_ot(b, b, pairwise_sq_dists(y, y), eps, max_iters, tol).value;
  return xy - 0.5 * (xx + yy);
}

ad::Var entropic_ot_node(const ad::Var& cost, double eps, std::size_t max_iters, double tol) {
  const auto a = uniform_weights(cost.rows());
  const auto b = uniform_weights(cost.cols());
  check_problem(a, b, cost.value(), eps);

  const bool track = cost.requires_grad();
  auto solver = std::make_shared<LogSinkhorn>(a, b, cost.value(), eps);
  solver->run(max_iters, tol, track);
  const double value = solver->result(tol).value;
  if (!track) return ad::constant(Matrix(1, 1, value));

  return ad::make_op(Matrix(1, 1, value), {cost}, [solver](ad::Node& n) {
    Matrix g = solver->cost_gradient();
    const double upstream = n.grad(0, 0);
    for (double& v : g.values()) v *= upstream;
    n.parents[0]->grad_buffer() += g;
  });
}

ad::Var sinkhorn_loss_node(const ad::Var& x, const ad::Var& y, double eps,
                           std::size_t unroll_iters, double tol) {
  check_clouds(x.value(), y.value(), "sinkhorn_loss_node");
  if (swap_sides(x.value(), y.value())) return sinkhorn_loss_node(y, x, eps, unroll_iters, tol);
  ad::Var xy = entropic_ot_node(ad::pairwise_sq_dists(x, y), eps, unroll_iters, tol);
  ad::Var xx = entropic_ot_node(ad::pairwise_sq_dists(x, x), eps, unroll_iters, tol);
  ad::Var yy = entropic_ot_node(ad::pairwise_sq_dists(y, y), eps, unroll_iters, tol);
  return ad::sub(xy, ad::scale(ad::add(xx, yy), 0.5));
}

}  // namespace ddic::ot
