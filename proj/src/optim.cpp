#include "ipseg/nn/optim.hpp"

#include <algorithm>
#include <cmath>

namespace ipseg::nn {

void sgd_step(std::span<Parameter* const> params, const SgdConfig& config) {
  for (Parameter* p : params) {
    if (p->frozen) continue;
    if (p->gradient.shape() != p->value.shape()) p->gradient = Tensor(p->value.shape());
    if (p->momentum.shape() != p->value.shape()) p->momentum = Tensor(p->value.shape());
    float* v = p->value.data();
    float* m = p->momentum.data();
    const float* g = p->gradient.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double step = config.momentum * m[i] + (g[i] + config.weight_decay * v[i]);
      m[i] = static_cast<float>(step);
      v[i] = static_cast<float>(v[i] - config.learning_rate * step);
    }
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

double poly_learning_rate(double base, std::size_t iteration, std::size_t max_iterations, double power) {
  if (max_iterations == 0) return base;
  const double progress = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(max_iterations));
  return base * std::pow(1.0 - progress, power);
}

}  // namespace ipseg::nn
