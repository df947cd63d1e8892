#pragma once

// Reverse-mode differentiation over small dense arrays.
//
// Every op builds a node that records its parents and a backward rule. Nodes
// that do not depend on any parameter are folded into constants. backward()
// runs once per graph; a second call on the same graph throws.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "shallowdiff/array.hpp"

namespace shallowdiff::ad {

namespace detail {
struct Node;
}

class Var {
 public:
  Var() = default;

  static Var constant(Array value);
  /// Leaf that receives gradients. Its gradient starts at zero.
  static Var parameter(Array value);

  const Array& value() const;
  /// Gradient; zero-filled for parameters, empty for interior nodes until backward runs.
  const Array& grad() const;
  const Shape& shape() const { return value().shape(); }

  bool requires_grad() const;
  bool defined() const { return node_ != nullptr; }

  // Parameter maintenance. Both throw on non-leaf nodes.
  Array& mutable_value();
  void zero_grad();

  bool same_node(const Var& other) const { return node_ == other.node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct VarAccess;
};

enum class ElementwiseKind { add, sub, mul, tanh, sigmoid, relu, scale };

/// Binary kinds need b; unary kinds ignore it. `constant` is used by scale.
/// Broadcasting: b may be a scalar or match a trailing suffix of a's shape.
/// add and mul also accept the mirrored case.
Var elementwise(ElementwiseKind kind, const Var& a, const Var& b = {}, double constant = 1.0);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);
Var scale(const Var& x, double factor);

Var abs(const Var& x);
Var softplus(const Var& x);
Var add_scalar(const Var& x, double value);

Var matmul(const Var& a, const Var& b);

/// Same-padded 1-D convolution (cross-correlation) over a [channels x length] input
/// with weights [out x in x kernel]. Kernel must be odd.
Var conv1d(const Var& x, const Var& w, std::size_t dilation = 1);
/// x [C x L] + b [C], broadcast along the length axis.
Var add_channel_bias(const Var& x, const Var& b);
/// [C x L] -> [C], average over length.
Var mean_over_length(const Var& x);

Var transpose(const Var& x);
Var reshape(const Var& x, Shape shape);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
/// Picks rows of a 2-D table; repeated indices accumulate in backward.
Var gather_rows(const Var& table, std::span<const std::size_t> rows);

Var softmax_rows(const Var& x);
/// Per-row standardization without affine terms.
Var layer_norm_rows(const Var& x, double eps = 1e-5);

Var sum(const Var& x);
Var mean(const Var& x);

/// Mean squared error against a fixed target.
Var mse(const Var& pred, const Array& target);
/// Mean absolute error against a fixed target.
Var l1(const Var& pred, const Array& target);
/// Binary cross-entropy on a single logit.
Var bce_with_logits(const Var& logit, double label);

/// Populates gradients of every node reachable from a scalar loss.
void backward(const Var& loss);

}  // namespace shallowdiff::ad
