#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>

#include "ipseg/nn/parameter.hpp"
#include "ipseg/nn/tensor.hpp"

namespace ipseg::nn {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a forward computation for exactly one reverse sweep.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for backpropagation. Nodes that do not depend on
/// a trainable parameter carry no gradient and are skipped by backward().
class Tape {
 public:
  /// Propagates the gradient stored at `node` into the node's inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value);
  /// Frozen parameters, and any parameter on a no-grad tape, record as constants.
  Var parameter(Parameter& p);
  Var parameter(const Parameter& p);

  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  /// Populates Parameter::gradient (accumulating) for every trainable
  /// parameter reachable from `loss`. Throws std::logic_error on reuse.
  void backward(Var loss);

  const Tensor& value(std::size_t node) const;
  const Tensor& grad(std::size_t node) const;
  bool needs_grad(std::size_t node) const { return nodes_[node].requires_grad; }
  /// Gradient buffer of `node`, zero-filled on first access.
  Tensor& grad_accumulator(std::size_t node);

 private:
  struct Node {
    Tensor owned;
    const Tensor* view = nullptr;
    Parameter* target = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_recordable() const;

  std::deque<Node> nodes_;
  bool grad_enabled_;
  bool consumed_ = false;
};

}  // namespace ipseg::nn
