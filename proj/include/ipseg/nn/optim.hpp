#pragma once

#include <cstddef>
#include <span>

#include "ipseg/nn/parameter.hpp"

namespace ipseg::nn {

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Classic momentum SGD: m <- momentum * m + (g + weight_decay * v); v <- v - lr * m.
/// Frozen parameters are skipped entirely (value and momentum untouched).
void sgd_step(std::span<Parameter* const> params, const SgdConfig& config);

void zero_grad(std::span<Parameter* const> params);

/// lr * (1 - iteration / max_iterations)^power, clamped at zero.
double poly_learning_rate(double base, std::size_t iteration, std::size_t max_iterations, double power = 0.9);

}  // namespace ipseg::nn
