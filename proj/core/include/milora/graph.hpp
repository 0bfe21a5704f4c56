#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "milora/ops.hpp"
#include "milora/tensor.hpp"

namespace milora {

// How the denominator of the rational activation treats its polynomial:
// 1 + |sum_i b_i x^i| (default) or 1 + sum_i |b_i x^i|.
enum class DenomMode { kAbsOfSum, kSumOfAbs };

class Graph;

struct GraphNode {
  Tensor value;
  Tensor grad;  // empty until backward touches this node
  std::function<void()> back;
  bool needs_grad = false;

  // Accumulates into grad, allocating zeros on first touch.
  void add_grad(const Tensor& g);
  Tensor& grad_ref();
};

// Lightweight handle to a node owned by a Graph.
class Value {
 public:
  Value() = default;
  const Tensor& t() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  int rows() const { return node_->value.rows(); }
  int cols() const { return node_->value.cols(); }
  bool valid() const { return node_ != nullptr; }

 private:
  friend class Graph;
  explicit Value(GraphNode* n) : node_(n) {}
  GraphNode* node_ = nullptr;
};

// Define-by-run reverse-mode tape over Tensor ops.  A graph is built fresh
// for every forward pass and discarded afterwards.  backward() resets node
// gradients, seeds the scalar loss with 1, and sweeps the tape in reverse;
// gradients of Parameter leaves accumulate into Parameter::grad, so repeated
// backward calls add up until Parameter::zero_grad.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----
  Value input(Tensor t);               // constant, receives no gradient
  Value param(Parameter& p);           // trainable leaf (constant if frozen)

  // ---- linear algebra ----
  Value matmul(Value a, Value b);
  Value transpose(Value a);
  Value add(Value a, Value b);
  Value add_bias(Value a, Value bias);     // bias is 1 x cols, broadcast over rows
  Value mul(Value a, Value b);             // elementwise
  Value scale(Value a, double c);
  Value scale_by(Value a, Value s);        // s is 1x1, broadcast multiply

  // ---- shape plumbing ----
  Value slice_rows(Value a, int r0, int r1);
  Value slice_cols(Value a, int c0, int c1);
  Value concat_rows(const std::vector<Value>& parts);
  Value concat_cols(const std::vector<Value>& parts);
  Value gather_cols(Value a, std::vector<int> idx);  // a is 1 x n -> 1 x k

  // ---- nonlinearities / normalizers ----
  Value softmax_rows(Value a);
  Value rmsnorm(Value x, Value w, double eps);
  Value silu(Value a);
  Value gelu(Value a);
  Value relu(Value a);
  // Elementwise rational function num(x)/den(x): num_coef is 1 x (m+1)
  // (constant term first), den_coef is 1 x n (first-order term first), and
  // den = 1 + |poly| per DenomMode.  Differentiable in x and both
  // coefficient vectors; the |.| kink uses subgradient 0 at 0.
  // Evaluates through rational_value_scalar, so graph and plain paths agree
  // bit-for-bit.
  Value rational(Value x, Value num_coef, Value den_coef, DenomMode mode);

  // ---- reductions ----
  Value mean_rows(Value a);
  Value max_rows(Value a);
  Value sum(Value a);                  // 1x1
  Value normalize_sum(Value a);        // row vector v -> v / sum(v)

  // ---- model-specific ----
  Value rope(Value a, int n_heads, int first_pos, double base);
  Value embedding(const std::vector<int>& ids, Parameter& table);
  // Sum of -log softmax(logits)[t] over rows where mask is nonzero.
  // Returns 1x1; divide by the unmasked count for a mean.
  Value ce_sum(Value logits, const std::vector<int>& targets,
               const std::vector<uint8_t>& mask);

  // Runs reverse-mode accumulation from a scalar loss.
  void backward(Value loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  GraphNode* make(Tensor v, bool needs_grad, std::function<void()> back);
  std::deque<GraphNode> nodes_;  // creation order == topological order
};

// One point of the rational function num(x) / (1 + |poly(x)|).  The single
// source of truth for its numeric value: both the graph op and the plain
// evaluator call this, keeping the two paths bit-identical.
double rational_value_scalar(double x, const Tensor& num_coef, const Tensor& den_coef,
                             DenomMode mode);

}  // namespace milora
