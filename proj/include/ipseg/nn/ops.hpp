#pragma once

#include <cstddef>
#include <span>

#include "ipseg/nn/autodiff.hpp"

namespace ipseg::nn {

/// 2-D cross-correlation (the kernel is not flipped) over NCHW input with an
/// OIHW weight tensor. `bias` may be an invalid Var for a bias-free layer.
/// Output size per axis: (in + 2 * padding - kernel) / stride + 1.
Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);

Var relu(Var x);
Var sigmoid(Var x);

/// NCHW -> NC mean over the spatial axes.
Var global_average_pool(Var x);

/// NCHW -> NC maximum over the spatial axes. The gradient flows to the
/// first position holding the maximum.
Var global_max_pool(Var x);

/// x [N, in], weight [out, in], bias [out] -> [N, out].
Var fully_connected(Var x, Var weight, Var bias);

/// NCHW -> N x C x (H * factor) x (W * factor), nearest neighbour.
Var upsample_nearest(Var x, std::size_t factor);

/// Concatenates along axis 1; every other axis must agree.
Var concat_channels(std::span<const Var> parts);

/// Masked mean of elementwise sigmoid binary cross-entropy. Elements with
/// mask 0 are excluded from both the sum and the count. An all-zero mask
/// yields 0 and logs a warning.
Var bce_with_logits(Var logits, const Tensor& targets, const Tensor& mask);

/// sum_i weights[i] * scalars[i], each scalar a one-element tensor.
Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

/// sum(x * weights) as a scalar.
Var dot(Var x, const Tensor& weights);

/// Overflow-free logistic function.
double stable_sigmoid(double z);

/// Per-element sigmoid BCE in log-sum-exp form.
double bce_term(double logit, double target);

}  // namespace ipseg::nn
