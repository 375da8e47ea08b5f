#include "ipseg/nn/autodiff.hpp"

#include <stdexcept>

namespace ipseg::nn {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->needs_grad(id_); }

void Tape::check_recordable() const {
  if (consumed_) {
    throw std::logic_error("tape already consumed by backward(); record a new forward pass");
  }
}

Var Tape::push(Node node) {
  check_recordable();
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  return push(std::move(node));
}

Var Tape::parameter(Parameter& p) {
  Node node;
  node.view = &p.value;
  if (grad_enabled_ && !p.frozen) {
    node.target = &p;
    node.requires_grad = true;
  }
  return push(std::move(node));
}

Var Tape::parameter(const Parameter& p) {
  Node node;
  node.view = &p.value;
  return push(std::move(node));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  for (const Var& in : inputs) {
    if (in.valid() && &in.tape() != this) {
      throw std::invalid_argument("operation mixes variables from different tapes");
    }
    if (in.valid() && nodes_[in.id()].requires_grad) node.requires_grad = true;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

const Tensor& Tape::value(std::size_t node) const {
  const Node& n = nodes_.at(node);
  return n.view ? *n.view : n.owned;
}

const Tensor& Tape::grad(std::size_t node) const { return nodes_.at(node).grad; }

Tensor& Tape::grad_accumulator(std::size_t node) {
  Node& n = nodes_.at(node);
  if (n.grad.size() == 0 && element_count(value(node).shape()) != 0) {
    n.grad = Tensor(value(node).shape());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (consumed_) {
    throw std::logic_error("backward() called twice on the same tape without a new forward pass");
  }
  if (!loss.valid() || &loss.tape() != this) {
    throw std::invalid_argument("backward() needs a loss recorded on this tape");
  }
  if (value(loss.id()).size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                to_string(value(loss.id()).shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;

  grad_accumulator(loss.id()).fill(1.0f);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.target) {
      Tensor& dst = n.target->gradient;
      if (dst.shape() != n.target->value.shape()) dst = Tensor(n.target->value.shape());
      const float* src = n.grad.data();
      float* out = dst.data();
      for (std::size_t k = 0; k < dst.size(); ++k) out[k] += src[k];
    }
    n.grad = Tensor();
    n.backward = nullptr;
  }
}

}  // namespace ipseg::nn
