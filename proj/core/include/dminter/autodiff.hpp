#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "dminter/tensor.hpp"

namespace dminter {

struct Node;

/// Handle to a node of the reverse-mode graph. Copies share the node.
///
/// Leaves are either parameters (gradient requested) or constants. Interior
/// nodes are produced by the primitives below and remember their inputs only
/// while gradient recording is enabled on the current thread.
class Var {
 public:
  Var();
  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool is_leaf() const;

  /// In-place access for optimizers and perturbation checks; leaves only.
  Tensor& mutable_leaf_value();

  const Node* node() const { return node_.get(); }

 private:
  friend Var make_var(Tensor value, std::vector<Var> inputs,
                      std::function<void(const Node&, const Tensor&, std::span<Tensor*>)> backward);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

struct Node {
  using BackwardFn = std::function<void(const Node& self, const Tensor& upstream,
                                        std::span<Tensor*> input_grads)>;
  Tensor value;
  std::vector<Var> inputs;
  BackwardFn backward;
  bool requires_grad = false;
  bool leaf = true;
};

/// Builds an interior node. Graph edges are dropped when recording is off or
/// no input requires a gradient.
Var make_var(Tensor value, std::vector<Var> inputs, Node::BackwardFn backward);

/// Thread-local switch for graph recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Result of a backward sweep: gradients keyed by leaf parameter.
class Gradients {
 public:
  /// Gradient for `param`; zeros of the right shape if it was not reached.
  Tensor of(const Var& param) const;
  bool reached(const Var& param) const;

 private:
  friend Gradients backward_sweep(const Var& root);
  std::unordered_map<const Node*, Tensor> grads_;
};

/// dL/dθ for every parameter reachable from the scalar `root`.
Gradients backward_sweep(const Var& root);

namespace ops {

// Primitive set. Everything else in the model is composed from these.

/// [n,k] x [k,m], or [n,k] x [m,k]^T when transpose_b is set.
Var matmul(const Var& a, const Var& b, bool transpose_b = false);

/// Elementwise a + b. `b` may equal a's shape, be a row broadcast over a's
/// leading rows (shape {cols} or {1, cols}), or be a scalar.
Var add(const Var& a, const Var& b);

/// Elementwise a * b with the same broadcasting rules as add.
Var mul(const Var& a, const Var& b);

/// max(x, 0); the subgradient at exactly 0 is 0.
Var relu(const Var& x);

/// Normalizes each row of x over its last axis, then applies gain and bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias);

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Rows of `table` selected by `ids`; shape {ids.size(), table.cols()}.
Var embedding(const Var& table, std::span<const std::size_t> ids);

/// Mean over `axis`, which is kept with extent 1.
Var mean(const Var& x, std::size_t axis);

/// Concatenation along `axis`; all other extents must agree.
Var concat(std::span<const Var> parts, std::size_t axis);

/// Max-shifted softmax along `axis`. Throws NumericError("non-finite logits").
Var softmax(const Var& logits, std::size_t axis);

/// Per-row -log softmax(logits)[target]; a rank-1 input is one row.
/// Returns shape {rows}.
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);

// Composites.

Var scale(const Var& x, double factor);
Var sum(const Var& x, std::size_t axis);
/// Mean of all entries as a {1} scalar.
Var mean_all(const Var& x);

}  // namespace ops

/// Plain (non-graph) softmax used by tests and inference utilities.
Tensor softmax(const Tensor& logits, std::size_t axis);

/// Scalar -log softmax(logits)[target] over a rank-1 (or single-row) tensor.
double cross_entropy_from_logits(const Tensor& logits, std::size_t target_index);

}  // namespace dminter
