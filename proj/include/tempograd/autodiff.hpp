#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tempograd/tensor.hpp"

namespace tempograd {

// One node of the computation graph. `parents` are the operation inputs; the
// `backprop` callback distributes this node's gradient into them.
struct GradNode {
  Tensor value;
  Tensor grad;
  bool grad_set = false;
  bool requires_grad = false;  // trainable leaf, gradient accumulates across backward calls
  bool needs_grad = false;     // interior node on some path to a trainable leaf
  std::vector<std::shared_ptr<GradNode>> parents;
  std::function<void(GradNode&)> backprop;

  bool wants_grad() const { return requires_grad || needs_grad; }
  void accumulate(const Tensor& delta);
  void accumulate_scaled(const Tensor& delta, double s);
};

// Value handle used throughout the engine. Copying shares the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<GradNode> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Handle semantics: a const Var still allows writing the underlying node,
  // the way a const shared_ptr does.
  Tensor& mutable_value() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad_set; }
  const Tensor& grad() const;
  void zero_grad();
  const std::shared_ptr<GradNode>& node() const { return node_; }

 private:
  std::shared_ptr<GradNode> node_;
};

Var make_param(Tensor value);
Var make_const(Tensor value);

// Runs reverse-mode accumulation from `loss`, which must be scalar shaped {1}.
// Interior gradients are cleared first; trainable-leaf gradients accumulate
// until Var::zero_grad. Traversal is iterative, so chain depth is bounded only
// by memory.
void backward(const Var& loss);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_bias(const Var& x, const Var& b);  // rank-2 x plus row-broadcast bias
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var log(const Var& a);
Var clamp(const Var& a, double lo, double hi);

Var concat_cols(const Var& a, const Var& b);
Var flatten(const Var& x);  // any shape -> rank 1, row-major order
Var stack_rows(const std::vector<Var>& rows);
Var take_rows(const Var& x, std::vector<int> idx);
Var sum_rows(const Var& x);   // n*d -> {d}
Var row_sums(const Var& x);   // n*d -> {n}
Var sum_all(const Var& x);    // -> {1}
Var mean_all(const Var& x);   // -> {1}
Var sum_vars(const std::vector<Var>& xs);

Var matmul(const Var& a, const Var& b);  // (m*k)(k*n) -> m*n
Var linear(const Var& x, const Var& w);  // (n*k)(r*k) -> n*r, x times w transposed
Var matvec(const Var& w, const Var& x);  // (r*c){c} -> {r}
Var vecmat(const Var& x, const Var& w);  // {r}(r*c) -> {c}
Var dot(const Var& a, const Var& b);     // {n}{n} -> {1}
Var softmax(const Var& x);               // {n} -> {n}, numerically stable

// out[i][k] = cos(freq[k] * dts[i] + phase[k]); freq and phase are {d} leaves.
Var time_encode(const Var& freq, const Var& phase, const std::vector<double>& dts);

// Sparse-dense product a*x. `a_t` must hold the transpose of `a`; it carries
// the backward pass without building transposes on the fly.
Var spmm(std::shared_ptr<const Csr> a, std::shared_ptr<const Csr> a_t, const Var& x);

// Segment ops partition the rows of a N*d input into B contiguous segments
// given by `offsets` (size B+1, offsets[0] = 0, offsets[B] = N). Empty
// segments produce zero rows, which is exactly the treatment an isolated
// query node needs.
Var segment_sum(const Var& x, std::vector<int> offsets);
Var segment_mean(const Var& x, std::vector<int> offsets);
// y[r] = x.row(r) dot q.row(segment_of(r)); q is B*d.
Var segment_rowdot(const Var& x, const Var& q, std::vector<int> offsets);
Var segment_softmax(const Var& x, std::vector<int> offsets);  // {N} -> {N}
// out.row(s) = sum over rows r of segment s of w[r] * x.row(r).
Var segment_weighted_rows(const Var& x, const Var& w, std::vector<int> offsets);

}  // namespace tempograd
