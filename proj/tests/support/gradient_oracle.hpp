#pragma once

// Double-precision reference implementations of the network primitives and a
// central finite-difference checker that compares them against the analytic
// gradients recorded by the tape.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ipseg/nn/autodiff.hpp"
#include "ipseg/nn/ops.hpp"
#include "ipseg/rng.hpp"

namespace ipseg::oracle {

using nn::Shape;
using nn::Tensor;
using Vec = std::vector<double>;

struct Array {
  Shape shape;
  Vec v;
};

inline Array from_tensor(const Tensor& t) { return {t.shape(), Vec(t.values().begin(), t.values().end())}; }

// Distance to the nearest non-differentiable point seen since the last
// reset: |pre-activation| for ReLU, the gap between the two largest values
// for max pooling. The checker rejects cases where a finite-difference step
// could cross a kink.
inline double& kink_margin() {
  static thread_local double margin = std::numeric_limits<double>::infinity();
  return margin;
}

inline Array ref_conv2d(const Array& x, const Array& w, const Array* b, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const std::size_t o = w.shape[0], k = w.shape[2];
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Array y{{n, o, oh, ow}, Vec(n * o * oh * ow, 0.0)};
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = b ? b->v[oc] : 0.0;
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                s += x.v[((in * c + ic) * h + iy) * wd + ix] * w.v[((oc * c + ic) * k + ky) * k + kx];
              }
          y.v[((in * o + oc) * oh + oy) * ow + ox] = s;
        }
  return y;
}

inline Array ref_relu(Array x) {
  for (double& v : x.v) {
    kink_margin() = std::min(kink_margin(), std::abs(v));
    v = v > 0.0 ? v : 0.0;
  }
  return x;
}

inline double ref_sigmoid_scalar(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Array ref_sigmoid(Array x) {
  for (double& v : x.v) v = ref_sigmoid_scalar(v);
  return x;
}

inline Array ref_global_average_pool(const Array& x) {
  const std::size_t rows = x.shape[0] * x.shape[1], plane = x.shape[2] * x.shape[3];
  Array y{{x.shape[0], x.shape[1]}, Vec(rows, 0.0)};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = 0; p < plane; ++p) y.v[r] += x.v[r * plane + p];
    y.v[r] /= static_cast<double>(plane);
  }
  return y;
}

inline Array ref_global_max_pool(const Array& x) {
  const std::size_t rows = x.shape[0] * x.shape[1], plane = x.shape[2] * x.shape[3];
  Array y{{x.shape[0], x.shape[1]}, Vec(rows, 0.0)};
  for (std::size_t r = 0; r < rows; ++r) {
    double best = -std::numeric_limits<double>::infinity(), second = best;
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = x.v[r * plane + p];
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (plane > 1) kink_margin() = std::min(kink_margin(), best - second);
    y.v[r] = best;
  }
  return y;
}

inline Array ref_fully_connected(const Array& x, const Array& w, const Array* b) {
  const std::size_t n = x.shape[0], in = x.shape[1], out = w.shape[0];
  Array y{{n, out}, Vec(n * out, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double s = b ? b->v[o] : 0.0;
      for (std::size_t j = 0; j < in; ++j) s += x.v[i * in + j] * w.v[o * in + j];
      y.v[i * out + o] = s;
    }
  return y;
}

inline Array ref_upsample(const Array& x, std::size_t f) {
  const std::size_t planes = x.shape[0] * x.shape[1], h = x.shape[2], w = x.shape[3];
  Array y{{x.shape[0], x.shape[1], h * f, w * f}, Vec(planes * h * w * f * f)};
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < h * f; ++oy)
      for (std::size_t ox = 0; ox < w * f; ++ox)
        y.v[(p * h * f + oy) * w * f + ox] = x.v[(p * h + oy / f) * w + ox / f];
  return y;
}

inline Array ref_concat(const std::vector<Array>& parts) {
  Shape shape = parts[0].shape;
  shape[1] = 0;
  for (const Array& p : parts) shape[1] += p.shape[1];
  Array y{shape, {}};
  const std::size_t n = shape[0];
  for (std::size_t i = 0; i < n; ++i)
    for (const Array& p : parts) {
      const std::size_t row = p.v.size() / n;
      y.v.insert(y.v.end(), p.v.begin() + static_cast<long>(i * row), p.v.begin() + static_cast<long>((i + 1) * row));
    }
  return y;
}

// log(1 + e^z) - t z written without cancellation for large |z|.
inline double ref_bce(const Array& z, const Tensor& t, const Tensor& m) {
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < z.v.size(); ++i) {
    if (m[i] == 0.0f) continue;
    const double zi = z.v[i];
    const double softplus = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
    sum += m[i] * (softplus - t[i] * zi);
    count += m[i];
  }
  return count > 0 ? sum / count : 0.0;
}

inline double ref_dot(const Array& x, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.v.size(); ++i) s += x.v[i] * w[i];
  return s;
}

// One gradient-check case: `library` builds the scalar on a tape from the
// inputs, `reference` evaluates the same scalar in double precision.
struct Case {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&)> library;
  std::function<double(const std::vector<Array>&)> reference;
};

struct CheckResult {
  double max_relative_error = 0.0;
  std::size_t elements = 0;
  bool kink_rejected = false;
  std::string worst;
};

constexpr double kStep = 1e-3;
constexpr double kKinkMargin = 4 * kStep;

// Relative error with a floor on the denominator, so gradients that are zero
// within rounding do not blow the ratio up.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-2});
}

inline CheckResult check(const Case& c) {
  CheckResult result;
  std::vector<nn::Parameter> params;
  params.reserve(c.inputs.size());
  for (std::size_t i = 0; i < c.inputs.size(); ++i) params.emplace_back("in" + std::to_string(i), c.inputs[i]);
  nn::Tape tape;
  std::vector<nn::Var> vars;
  for (nn::Parameter& p : params) vars.push_back(tape.parameter(p));
  tape.backward(c.library(tape, vars));

  std::vector<Array> base;
  for (const Tensor& t : c.inputs) base.push_back(from_tensor(t));
  kink_margin() = std::numeric_limits<double>::infinity();
  c.reference(base);
  if (kink_margin() < kKinkMargin) {
    result.kink_rejected = true;
    return result;
  }
  for (std::size_t k = 0; k < base.size(); ++k) {
    for (std::size_t i = 0; i < base[k].v.size(); ++i) {
      std::vector<Array> probe = base;
      probe[k].v[i] = base[k].v[i] + kStep;
      const double up = c.reference(probe);
      probe[k].v[i] = base[k].v[i] - kStep;
      const double down = c.reference(probe);
      const double numeric = (up - down) / (2 * kStep);
      const double analytic = params[k].gradient[i];
      const double err = relative_error(analytic, numeric);
      ++result.elements;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst = c.name + " input " + std::to_string(k) + "[" + std::to_string(i) +
                       "]: analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
      }
    }
  }
  if (kink_margin() < kKinkMargin) result.kink_rejected = true;
  return result;
}

// Redraws a case whose finite-difference step would straddle a kink.
template <typename Make>
CheckResult check_avoiding_kinks(std::uint64_t seed, Make make) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    CheckResult r = check(make(derive_seed(seed, attempt)));
    if (!r.kink_rejected) return r;
  }
}

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = static_cast<float>(rng.normal(0.0, scale));
  return t;
}

inline Tensor random_mask(Rng& rng, const Shape& shape) {
  Tensor m(shape);
  for (float& v : m.values()) v = rng.bernoulli(0.7) ? 1.0f : 0.0f;
  m[0] = 1.0f;
  return m;
}

inline Tensor random_targets(Rng& rng, const Shape& shape) {
  Tensor t(shape);
  for (float& v : t.values()) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  return t;
}

// Builds the case list for one seed. Every input tensor holds at most 64
// elements; every case reduces to a scalar through a random projection or a
// loss so all gradient entries are exercised.
inline std::vector<Case> primitive_cases(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Case> cases;
  auto projected = [&](std::string name, std::vector<Tensor> inputs, Shape out_shape,
                       std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&)> op,
                       std::function<Array(const std::vector<Array>&)> ref) {
    Tensor w = random_tensor(rng, std::move(out_shape));
    cases.push_back(Case{std::move(name), std::move(inputs),
                         [op, w](nn::Tape& t, const std::vector<nn::Var>& v) { return nn::dot(op(t, v), w); },
                         [ref, w](const std::vector<Array>& a) { return ref_dot(ref(a), w); }});
  };

  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      const std::size_t out = (5 + 2 * pad - 3) / stride + 1;
      projected("conv2d s" + std::to_string(stride) + " p" + std::to_string(pad),
                {random_tensor(rng, {1, 2, 5, 5}), random_tensor(rng, {3, 2, 3, 3}, 0.5), random_tensor(rng, {3})},
                {1, 3, out, out},
                [stride, pad](nn::Tape&, const std::vector<nn::Var>& v) {
                  return nn::conv2d(v[0], v[1], v[2], stride, pad);
                },
                [stride, pad](const std::vector<Array>& a) { return ref_conv2d(a[0], a[1], &a[2], stride, pad); });
    }
  }
  projected("conv2d 1x1 batch2", {random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {2, 3, 1, 1})}, {2, 2, 3, 3},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::conv2d(v[0], v[1], nn::Var{}, 1, 0); },
            [](const std::vector<Array>& a) { return ref_conv2d(a[0], a[1], nullptr, 1, 0); });
  projected("relu", {random_tensor(rng, {2, 2, 4, 4})}, {2, 2, 4, 4},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::relu(v[0]); },
            [](const std::vector<Array>& a) { return ref_relu(a[0]); });
  projected("sigmoid", {random_tensor(rng, {4, 16}, 3.0)}, {4, 16},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::sigmoid(v[0]); },
            [](const std::vector<Array>& a) { return ref_sigmoid(a[0]); });
  projected("global_average_pool", {random_tensor(rng, {2, 3, 3, 3})}, {2, 3},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::global_average_pool(v[0]); },
            [](const std::vector<Array>& a) { return ref_global_average_pool(a[0]); });
  projected("global_max_pool", {random_tensor(rng, {2, 3, 3, 3})}, {2, 3},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::global_max_pool(v[0]); },
            [](const std::vector<Array>& a) { return ref_global_max_pool(a[0]); });
  projected("fully_connected",
            {random_tensor(rng, {3, 6}), random_tensor(rng, {4, 6}), random_tensor(rng, {4})}, {3, 4},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::fully_connected(v[0], v[1], v[2]); },
            [](const std::vector<Array>& a) { return ref_fully_connected(a[0], a[1], &a[2]); });
  projected("upsample_nearest", {random_tensor(rng, {1, 2, 3, 3})}, {1, 2, 6, 6},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::upsample_nearest(v[0], 2); },
            [](const std::vector<Array>& a) { return ref_upsample(a[0], 2); });
  projected("concat_channels", {random_tensor(rng, {2, 1, 2, 2}), random_tensor(rng, {2, 3, 2, 2})}, {2, 4, 2, 2},
            [](nn::Tape&, const std::vector<nn::Var>& v) { return nn::concat_channels(v); },
            [](const std::vector<Array>& a) { return ref_concat(a); });

  {
    const Shape s{2, 2, 4, 4};
    Tensor targets = random_targets(rng, s), mask = random_mask(rng, s);
    cases.push_back(Case{"bce_with_logits",
                         {random_tensor(rng, s, 4.0)},
                         [targets, mask](nn::Tape&, const std::vector<nn::Var>& v) {
                           return nn::bce_with_logits(v[0], targets, mask);
                         },
                         [targets, mask](const std::vector<Array>& a) { return ref_bce(a[0], targets, mask); }});
  }
  {
    const std::vector<double> weights{1.0, rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)};
    cases.push_back(Case{"weighted_sum",
                         {random_tensor(rng, {}), random_tensor(rng, {}), random_tensor(rng, {})},
                         [weights](nn::Tape&, const std::vector<nn::Var>& v) { return nn::weighted_sum(v, weights); },
                         [weights](const std::vector<Array>& a) {
                           return weights[0] * a[0].v[0] + weights[1] * a[1].v[0] + weights[2] * a[2].v[0];
                         }});
  }
  return cases;
}

// conv(1->2, s1) -> relu -> conv(2->2, s2) -> relu -> upsample x2 -> BCE:
// a backbone-plus-head network with 58 parameters.
inline Case tiny_network_case(std::uint64_t seed) {
  Rng rng(seed);
  Tensor image = random_tensor(rng, {1, 1, 6, 6});
  const Shape out{1, 2, 6, 6};
  Tensor targets = random_targets(rng, out), mask = random_mask(rng, out);
  return Case{"tiny network",
              {random_tensor(rng, {2, 1, 3, 3}, 0.7), random_tensor(rng, {2}, 0.3), random_tensor(rng, {2, 2, 3, 3}, 0.7),
               random_tensor(rng, {2}, 0.3)},
              [image, targets, mask](nn::Tape& t, const std::vector<nn::Var>& v) {
                nn::Var x = t.constant(image);
                nn::Var h = nn::relu(nn::conv2d(x, v[0], v[1], 1, 1));
                nn::Var z = nn::relu(nn::conv2d(h, v[2], v[3], 2, 1));
                return nn::bce_with_logits(nn::upsample_nearest(z, 2), targets, mask);
              },
              [image, targets, mask](const std::vector<Array>& a) {
                const Array x = from_tensor(image);
                const Array h = ref_relu(ref_conv2d(x, a[0], &a[1], 1, 1));
                const Array z = ref_relu(ref_conv2d(h, a[2], &a[3], 2, 1));
                return ref_bce(ref_upsample(z, 2), targets, mask);
              }};
}

}  // namespace ipseg::oracle
