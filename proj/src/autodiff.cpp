#include "ddic/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ddic/error.hpp"

namespace ddic::ad {

Matrix& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
  return grad;
}

Matrix Var::grad() const {
  if (node_->grad.empty()) return Matrix(node_->value.rows(), node_->value.cols());
  return node_->grad;
}

double Var::scalar() const {
  if (value().rows() != 1 || value().cols() != 1) {
    throw ShapeError("scalar(): node is " + shape_string(value()));
  }
  return value()(0, 0);
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var make_op(Matrix value, std::vector<Var> parents, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const Var& p) { return p.requires_grad(); });
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

namespace {

// Accumulates `g` into parent `idx` if that parent wants a gradient.
void accumulate(Node& self, std::size_t idx, const Matrix& g) {
  Node& p = *self.parents[idx];
  if (p.requires_grad) p.grad_buffer() += g;
}

bool wants(const Node& self, std::size_t idx) { return self.parents[idx]->requires_grad; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return make_op(ddic::matmul(a.value(), b.value()), {a, b}, [](Node& n) {
    const Matrix& av = n.parents[0]->value;
    const Matrix& bv = n.parents[1]->value;
    if (wants(n, 0)) accumulate(n, 0, matmul_nt(n.grad, bv));
    if (wants(n, 1)) accumulate(n, 1, matmul_tn(av, n.grad));
  });
}

Var add(const Var& a, const Var& b) {
  return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    accumulate(n, 0, n.grad);
    accumulate(n, 1, n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    accumulate(n, 0, n.grad);
    if (wants(n, 1)) accumulate(n, 1, -1.0 * n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  return make_op(hadamard(a.value(), b.value()), {a, b}, [](Node& n) {
    if (wants(n, 0)) accumulate(n, 0, hadamard(n.grad, n.parents[1]->value));
    if (wants(n, 1)) accumulate(n, 1, hadamard(n.grad, n.parents[0]->value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(s * a.value(), {a}, [s](Node& n) { accumulate(n, 0, s * n.grad); });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value();
  for (double& v : out.values()) v += s;
  return make_op(std::move(out), {a}, [](Node& n) { accumulate(n, 0, n.grad); });
}

Var relu(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [](Node& n) {
    Matrix g = n.grad;
    auto in = n.parents[0]->value.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      if (!(in[i] > 0.0)) gv[i] = 0.0;
    }
    accumulate(n, 0, g);
  });
}

Var exp(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  return make_op(std::move(out), {a}, [](Node& n) { accumulate(n, 0, hadamard(n.grad, n.value)); });
}

Var log(const Var& a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = std::log(v);
  return make_op(std::move(out), {a}, [](Node& n) {
    Matrix g = n.grad;
    auto in = n.parents[0]->value.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] /= in[i];
    accumulate(n, 0, g);
  });
}

Var sum(const Var& a) {
  return make_op(Matrix(1, 1, ddic::sum(a.value())), {a}, [](Node& n) {
    const Matrix& in = n.parents[0]->value;
    accumulate(n, 0, Matrix(in.rows(), in.cols(), n.grad(0, 0)));
  });
}

Var row_sum(const Var& a) {
  return make_op(row_sums(a.value()), {a}, [](Node& n) {
    const Matrix& in = n.parents[0]->value;
    Matrix g(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
      for (double& v : g.row(i)) v = n.grad(i, 0);
    }
    accumulate(n, 0, g);
  });
}

Var col_sum(const Var& a) {
  return make_op(col_sums(a.value()), {a}, [](Node& n) {
    const Matrix& in = n.parents[0]->value;
    Matrix g(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
      auto r = g.row(i);
      for (std::size_t j = 0; j < in.cols(); ++j) r[j] = n.grad(0, j);
    }
    accumulate(n, 0, g);
  });
}

Var add_row(const Var& a, const Var& v) {
  if (v.rows() != 1 || v.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_string(a.value()) + " + " + shape_string(v.value()));
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) r[j] += v.value()(0, j);
  }
  return make_op(std::move(out), {a, v}, [](Node& n) {
    accumulate(n, 0, n.grad);
    if (wants(n, 1)) accumulate(n, 1, col_sums(n.grad));
  });
}

Var add_col(const Var& a, const Var& v) {
  if (v.cols() != 1 || v.rows() != a.rows()) {
    throw ShapeError("add_col: " + shape_string(a.value()) + " + " + shape_string(v.value()));
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (double& x : out.row(i)) x += v.value()(i, 0);
  }
  return make_op(std::move(out), {a, v}, [](Node& n) {
    accumulate(n, 0, n.grad);
    if (wants(n, 1)) accumulate(n, 1, row_sums(n.grad));
  });
}

Var pairwise_sq_dists(const Var& x, const Var& y) {
  return make_op(ddic::pairwise_sq_dists(x.value(), y.value()), {x, y}, [](Node& n) {
    const Matrix& xv = n.parents[0]->value;
    const Matrix& yv = n.parents[1]->value;
    const Matrix& g = n.grad;
    // d/dx_i = 2 sum_j g_ij (x_i - y_j), d/dy_j = 2 sum_i g_ij (y_j - x_i)
    if (wants(n, 0)) {
      Matrix gx = matmul(g, yv);
      Matrix rs = row_sums(g);
      for (std::size_t i = 0; i < xv.rows(); ++i) {
        auto out = gx.row(i);
        auto xi = xv.row(i);
        for (std::size_t t = 0; t < xv.cols(); ++t) out[t] = 2.0 * (rs(i, 0) * xi[t] - out[t]);
      }
      accumulate(n, 0, gx);
    }
    if (wants(n, 1)) {
      Matrix gy = matmul_tn(g, xv);
      Matrix cs = col_sums(g);
      for (std::size_t j = 0; j < yv.rows(); ++j) {
        auto out = gy.row(j);
        auto yj = yv.row(j);
        for (std::size_t t = 0; t < yv.cols(); ++t) out[t] = 2.0 * (cs(0, j) * yj[t] - out[t]);
      }
      accumulate(n, 1, gy);
    }
  });
}

Var logsumexp_rows(const Var& a) {
  auto lse = ddic::logsumexp_rows(a.value());
  return make_op(Matrix::column_vector(lse), {a}, [](Node& n) {
    const Matrix& in = n.parents[0]->value;
    Matrix g(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.rows(); ++i) {
      auto src = in.row(i);
      auto dst = g.row(i);
      const double shift = n.value(i, 0);
      for (std::size_t j = 0; j < in.cols(); ++j) dst[j] = n.grad(i, 0) * std::exp(src[j] - shift);
    }
    accumulate(n, 0, g);
  });
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward: root must be 1x1, got " + shape_string(root.value()));
  }
  if (!root.requires_grad()) return;

  // Post-order DFS gives a topological order; parents come before children.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

double grad_check(const std::function<Var(const Var&)>& f, const Matrix& x, double h) {
  Var xp = parameter(x);
  Var out = f(xp);
  if (!std::isfinite(out.scalar())) throw ContractError("grad_check: f is not finite at x");
  backward(out);
  const Matrix analytic = xp.grad();

  double worst = 0.0;
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + h;
    const double up = f(constant(probe)).scalar();
    probe.values()[i] = orig - h;
    const double down = f(constant(probe)).scalar();
    probe.values()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw ContractError("grad_check: f is not finite at a probe point");
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.values()[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace ddic::ad
