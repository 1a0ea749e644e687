#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ddic/matrix.hpp"

// Reverse-mode automatic differentiation over whole matrices.
//
// Every primitive builds a Node holding its forward value, shared pointers to
// its inputs and a closure that pushes the node's gradient into its inputs.
// Graphs are acyclic by construction: a node can only reference nodes that
// existed before it. A graph and its backward pass belong to one thread.
namespace ddic::ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Gradient buffer, zero-initialized on first use.
  Matrix& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  // Accumulated gradient, or zeros of the value's shape when none arrived.
  Matrix grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  // Value of a 1x1 node.
  double scalar() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using BackwardFn = std::function<void(Node&)>;

Var constant(Matrix value);
Var parameter(Matrix value);

// Registers a new primitive. `backward` runs only when some parent requires
// a gradient; it reads node.grad and accumulates into parent grad buffers.
Var make_op(Matrix value, std::vector<Var> parents, BackwardFn backward);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// 1x1 sum of every entry.
Var sum(const Var& a);
// n x 1
Var row_sum(const Var& a);
// 1 x m
Var col_sum(const Var& a);
// a (n x m) + v (1 x m) broadcast down the rows.
Var add_row(const Var& a, const Var& v);
// a (n x m) + v (n x 1) broadcast across the columns.
Var add_col(const Var& a, const Var& v);
Var pairwise_sq_dists(const Var& x, const Var& y);
// n x 1
Var logsumexp_rows(const Var& a);

// Runs the reverse sweep from a 1x1 root. Gradients accumulate, so call it
// once per freshly built graph.
void backward(const Var& root);

// Largest |analytic - central difference| / max(1, |analytic|) over the
// entries of x. `f` must build its graph from the Var it is handed.
double grad_check(const std::function<Var(const Var&)>& f, const Matrix& x, double h = 1e-5);

}  // namespace ddic::ad
