#pragma once

// Eager reverse-mode automatic differentiation.
//
// Every operation computes its value immediately and, when any operand needs a
// gradient, records a closure that pushes the upstream gradient to its
// operands. `backward` replays those closures in reverse topological order.
// A graph belongs to one thread; data parallelism builds one graph per sample.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lrstat/kernels.hpp"
#include "lrstat/tensor.hpp"

namespace lrstat {

namespace detail {
struct Node;
}

/// Handle to a node of the computation graph (the differentiable value).
class Var {
 public:
  Var() = default;

  /// A graph input. Gradients accumulate into it across backward calls.
  static Var leaf(Tensor value, bool requires_grad = true);
  /// A graph input that never receives a gradient.
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  bool requires_grad() const;
  bool is_leaf() const;
  void zero_grad();

  // Internal: used by operations and backward().
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // empty for leaves
};
}  // namespace detail

/// Same value, cut from the graph.
Var detach(const Var& v);

// Elementwise. Binary operations require equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
/// Subgradient 0 at 0.
Var abs(const Var& a);
Var square(const Var& a);
/// relu(0) = 0 with derivative 0.
Var relu(const Var& a);

Var reduce_sum(const Var& a, std::size_t axis);
Var sum(const Var& a);
Var reshape(const Var& a, Shape shape);
/// Stacks equally shaped values along a new leading axis.
Var stack(std::span<const Var> items);
/// Row `i` of a rank-2 value, as a rank-1 value.
Var row(const Var& a, std::size_t i);

/// [m x k] * [k x n] -> [m x n]
Var matmul(const Var& a, const Var& b);

/// x: [C_in x H x W], kernel: [C_out x C_in x kh x kw] -> [C_out x H' x W']
Var conv2d(const Var& x, const Var& kernel, std::size_t stride, std::size_t pad);
/// Adds bias[c] to every element of channel c of a [C x H x W] value.
Var add_channel_bias(const Var& x, const Var& bias);
/// x: [C x H x W]; square window. Windows must tile each axis exactly.
Var avgpool2d(const Var& x, std::size_t window, std::size_t stride);

/// Max-subtracted softmax along `axis`.
Var softmax(const Var& x, std::size_t axis);

inline constexpr double kNormEpsilon = 1e-12;
/// x / ||x||_2 for a flat vector; throws DegenerateInputError when ||x|| <= 1e-12.
Var l2_normalize(const Var& x);
/// ||x||_2 of all elements; subgradient 0 at the origin.
Var l2_norm(const Var& x);

/// -log softmax(logits)[label] for a logits vector of any shape.
Var cross_entropy(const Var& logits, std::size_t label);

/// Accumulates d(root)/d(leaf) into every reachable leaf. Root must be scalar.
void backward(const Var& root);

/// Max over coordinates of |analytic - central difference| /
/// max(|analytic|, |numeric|, 1e-8) for the gradient of `f` at `x`.
double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h = 1e-5);

}  // namespace lrstat
