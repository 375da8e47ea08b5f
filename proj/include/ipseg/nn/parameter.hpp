#pragma once

#include <string>

#include "ipseg/nn/tensor.hpp"

namespace ipseg::nn {

/// A trainable tensor with its gradient and SGD momentum buffer.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor initial);

  std::string name;
  Tensor value;
  Tensor gradient;
  Tensor momentum;
  bool frozen = false;

  void zero_grad() { gradient.fill(0.0f); }
};

}  // namespace ipseg::nn
