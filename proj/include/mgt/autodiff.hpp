// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mgt/tensor.hpp"

namespace mgt {

/// A named trainable tensor with its gradient accumulator.
///
/// Frozen parameters enter a tape as constants: they never accumulate
/// gradient and the optimizer skips them.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool frozen = false);

  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives
/// and has not been cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a forward computation and replays it backwards.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep. Gradients of Parameter
/// leaves are added into Parameter::grad when backward() finishes.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Data that never receives a gradient (inputs, graph masks).
  Var constant(Tensor value);
  /// Differentiable leaf that is not bound to a Parameter.
  Var variable(Tensor value);
  /// Leaf bound to `p`. Frozen parameters behave like constants.
  Var parameter(Parameter& p);

  /// Appends an op result. `backward` is dropped when no input needs grad.
  Var record(Tensor value, std::span<const std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(Var v) const { return !nodes_[v.id()].grad.empty(); }
  const Tensor& grad(Var v) const;

  /// Gradient flowing into node `id`, or nullptr when it needs none. Op
  /// backward functions accumulate into the returned buffer.
  Tensor* grad_sink(std::size_t id);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

  /// Runs the backward sweep from a single-element root seeded with `seed`.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// Differentiable ops. All inputs must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a + c where c is data (e.g. an additive mask that may hold -inf).
Var add_constant(Var a, const Tensor& c);
/// x[m x n] + b[n] broadcast over rows.
Var add_row_bias(Var x, Var b);
Var scale(Var a, double s);
Var relu(Var a);
/// Per-row layer normalization followed by an elementwise affine map.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var masked_row_softmax(Var scores);
/// -log softmax(logits)[label]. Logits are [K] or [1 x K].
Var cross_entropy(Var logits, std::size_t label);
/// Sum of x * w over all elements, w being data of the same shape.
Var weighted_sum(Var x, const Tensor& w);

Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Rows of `table` selected by `ids`, in order; repeats allowed.
Var gather_rows(Var table, std::span<const std::size_t> ids);
/// The leading [len x len] block of slice `index` of a rank-3 tensor.
Var block_slice(Var x, std::size_t index, std::size_t len);

/// Numerically stable -log softmax(logits)[label] on plain data.
double cross_entropy_value(std::span<const double> logits, std::size_t label);

}  // namespace mgt
