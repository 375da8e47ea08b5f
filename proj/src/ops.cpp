#include "ipseg/nn/ops.hpp"

#include <Eigen/Core>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipseg/log.hpp"

namespace ipseg::nn {
namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

#if defined(__GLIBC__)
// im2col buffers of several MB are allocated and released on every layer
// call. Served by mmap they cost a page-fault storm each time, which
// dominated training time, so keep them on the heap.
const bool kLargeBuffersOnHeap = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t outputs, kernel_h, kernel_w;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kernel_h * kernel_w; }
  std::size_t plane() const { return out_h * out_w; }
};

// Columns hold one output location each; rows enumerate (channel, ky, kx).
void im2col(const float* x, const ConvGeometry& g, MatD& cols) {
  const std::size_t plane = g.plane();
  cols.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.batch * plane));
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * g.kernel_h + ky) * g.kernel_w + kx);
        double* dst = cols.row(row).data();
        for (std::size_t n = 0; n < g.batch; ++n) {
          const float* src_plane = x + (n * g.channels + c) * g.height * g.width;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            double* d = dst + n * plane + oy * g.out_w;
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
              std::fill(d, d + g.out_w, 0.0);
              continue;
            }
            const float* src = src_plane + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
              d[ox] = (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) ? src[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_accumulate(const MatD& cols, const ConvGeometry& g, std::vector<double>& dx) {
  const std::size_t plane = g.plane();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * g.kernel_h + ky) * g.kernel_w + kx);
        const double* src = cols.row(row).data();
        for (std::size_t n = 0; n < g.batch; ++n) {
          double* dst_plane = dx.data() + (n * g.channels + c) * g.height * g.width;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            const double* s = src + n * plane + oy * g.out_w;
            double* d = dst_plane + static_cast<std::size_t>(iy) * g.width;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) d[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

MatD to_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  MatD m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const float* src = t.data();
  double* dst = m.data();
  for (std::size_t i = 0; i < rows * cols; ++i) dst[i] = src[i];
  return m;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  }
}

}  // namespace

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_term(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1)) {
    throw std::invalid_argument("conv2d: input " + to_string(x.shape()) + " incompatible with weights " +
                                to_string(w.shape()));
  }
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, padding, 0, 0};
  if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w) {
    throw std::invalid_argument("conv2d: kernel " + to_string(w.shape()) + " larger than padded input " +
                                to_string(x.shape()));
  }
  g.out_h = (g.height + 2 * padding - g.kernel_h) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kernel_w) / stride + 1;
  if (bias.valid() && (bias.value().rank() != 1 || bias.value().dim(0) != g.outputs)) {
    throw std::invalid_argument("conv2d: bias " + to_string(bias.value().shape()) + " does not match weights " +
                                to_string(w.shape()));
  }

  auto cols = std::make_shared<MatD>();
  im2col(x.data(), g, *cols);
  const MatD wm = to_matrix(w, g.outputs, g.patch());
  const MatD out = wm * (*cols);

  const std::size_t plane = g.plane();
  Tensor y({g.batch, g.outputs, g.out_h, g.out_w});
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.outputs; ++o) {
      const double b = bias.valid() ? bias.value()[o] : 0.0;
      const double* src = out.row(static_cast<Eigen::Index>(o)).data() + n * plane;
      float* dst = y.data() + (n * g.outputs + o) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<float>(src[p] + b);
    }
  }

  const bool keep_cols = weight.requires_grad();
  if (!keep_cols) cols.reset();
  return input.tape().record(
      std::move(y), {input, weight, bias},
      [g, cols, xi = input.id(), wi = weight.id(), bi = bias.valid() ? bias.id() : SIZE_MAX](Tape& tape,
                                                                                           std::size_t self) {
        const Tensor& gy = tape.grad(self);
        const std::size_t plane = g.plane();
        MatD gm(static_cast<Eigen::Index>(g.outputs), static_cast<Eigen::Index>(g.batch * plane));
        for (std::size_t n = 0; n < g.batch; ++n) {
          for (std::size_t o = 0; o < g.outputs; ++o) {
            const float* src = gy.data() + (n * g.outputs + o) * plane;
            double* dst = gm.row(static_cast<Eigen::Index>(o)).data() + n * plane;
            for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p];
          }
        }
        if (tape.needs_grad(wi)) {
          const MatD gw = gm * cols->transpose();
          Tensor& acc = tape.grad_accumulator(wi);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<float>(gw.data()[i]);
        }
        if (bi != SIZE_MAX && tape.needs_grad(bi)) {
          Tensor& acc = tape.grad_accumulator(bi);
          for (std::size_t o = 0; o < g.outputs; ++o) {
            acc[o] += static_cast<float>(gm.row(static_cast<Eigen::Index>(o)).sum());
          }
        }
        if (tape.needs_grad(xi)) {
          const MatD wm = to_matrix(tape.value(wi), g.outputs, g.patch());
          const MatD gcols = wm.transpose() * gm;
          std::vector<double> dx(g.batch * g.channels * g.height * g.width, 0.0);
          col2im_accumulate(gcols, g, dx);
          Tensor& acc = tape.grad_accumulator(xi);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<float>(dx[i]);
        }
      });
}

Var relu(Var x) {
  const Tensor& in = x.value();
  Tensor y(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] > 0.0f ? in[i] : 0.0f;
  return x.tape().record(std::move(y), {x}, [xi = x.id()](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& in = tape.value(xi);
    Tensor& acc = tape.grad_accumulator(xi);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      if (in[i] > 0.0f) acc[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  const Tensor& in = x.value();
  Tensor y(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = static_cast<float>(stable_sigmoid(in[i]));
  return x.tape().record(std::move(y), {x}, [xi = x.id()](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& y = tape.value(self);
    Tensor& acc = tape.grad_accumulator(xi);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double s = y[i];
      acc[i] += static_cast<float>(g[i] * s * (1.0 - s));
    }
  });
}

Var global_average_pool(Var x) {
  const Tensor& in = x.value();
  if (in.rank() != 4) throw std::invalid_argument("global_average_pool: expected NCHW, got " + to_string(in.shape()));
  const std::size_t rows = in.dim(0) * in.dim(1);
  const std::size_t plane = in.dim(2) * in.dim(3);
  Tensor y({in.dim(0), in.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    const float* src = in.data() + r * plane;
    for (std::size_t p = 0; p < plane; ++p) sum += src[p];
    y[r] = static_cast<float>(sum / static_cast<double>(plane));
  }
  return x.tape().record(std::move(y), {x}, [xi = x.id(), rows, plane](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& acc = tape.grad_accumulator(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const float share = static_cast<float>(g[r] / static_cast<double>(plane));
      float* dst = acc.data() + r * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] += share;
    }
  });
}

Var global_max_pool(Var x) {
  const Tensor& in = x.value();
  if (in.rank() != 4) throw std::invalid_argument("global_max_pool: expected NCHW, got " + to_string(in.shape()));
  const std::size_t rows = in.dim(0) * in.dim(1);
  const std::size_t plane = in.dim(2) * in.dim(3);
  if (plane == 0) throw std::invalid_argument("global_max_pool: empty spatial extent");
  Tensor y({in.dim(0), in.dim(1)});
  std::vector<std::size_t> argmax(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = in.data() + r * plane;
    argmax[r] = static_cast<std::size_t>(std::max_element(src, src + plane) - src);
    y[r] = src[argmax[r]];
  }
  return x.tape().record(std::move(y), {x}, [xi = x.id(), plane, argmax = std::move(argmax)](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& acc = tape.grad_accumulator(xi);
    for (std::size_t r = 0; r < argmax.size(); ++r) acc[r * plane + argmax[r]] += g[r];
  });
}

Var fully_connected(Var x, Var weight, Var bias) {
  const Tensor& in = x.value();
  const Tensor& w = weight.value();
  if (in.rank() != 2 || w.rank() != 2 || in.dim(1) != w.dim(1)) {
    throw std::invalid_argument("fully_connected: input " + to_string(in.shape()) + " incompatible with weights " +
                                to_string(w.shape()));
  }
  const std::size_t batch = in.dim(0), fan_in = in.dim(1), fan_out = w.dim(0);
  if (bias.valid() && (bias.value().rank() != 1 || bias.value().dim(0) != fan_out)) {
    throw std::invalid_argument("fully_connected: bias " + to_string(bias.value().shape()) +
                                " does not match weights " + to_string(w.shape()));
  }
  const MatD xm = to_matrix(in, batch, fan_in);
  const MatD wm = to_matrix(w, fan_out, fan_in);
  const MatD ym = xm * wm.transpose();
  Tensor y({batch, fan_out});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < fan_out; ++o) {
      const double b = bias.valid() ? bias.value()[o] : 0.0;
      y[n * fan_out + o] = static_cast<float>(ym(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(o)) + b);
    }
  }
  return x.tape().record(
      std::move(y), {x, weight, bias},
      [batch, fan_in, fan_out, xi = x.id(), wi = weight.id(), bi = bias.valid() ? bias.id() : SIZE_MAX](
          Tape& tape, std::size_t self) {
        const MatD gm = to_matrix(tape.grad(self), batch, fan_out);
        if (tape.needs_grad(wi)) {
          const MatD gw = gm.transpose() * to_matrix(tape.value(xi), batch, fan_in);
          Tensor& acc = tape.grad_accumulator(wi);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<float>(gw.data()[i]);
        }
        if (bi != SIZE_MAX && tape.needs_grad(bi)) {
          Tensor& acc = tape.grad_accumulator(bi);
          for (std::size_t o = 0; o < fan_out; ++o) {
            acc[o] += static_cast<float>(gm.col(static_cast<Eigen::Index>(o)).sum());
          }
        }
        if (tape.needs_grad(xi)) {
          const MatD gx = gm * to_matrix(tape.value(wi), fan_out, fan_in);
          Tensor& acc = tape.grad_accumulator(xi);
          for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<float>(gx.data()[i]);
        }
      });
}

Var upsample_nearest(Var x, std::size_t factor) {
  const Tensor& in = x.value();
  if (in.rank() != 4) throw std::invalid_argument("upsample_nearest: expected NCHW, got " + to_string(in.shape()));
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
  const std::size_t planes = in.dim(0) * in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor y({in.dim(0), in.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = in.data() + p * h * w;
    float* dst = y.data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const float* s = src + (oy / factor) * w;
      float* d = dst + oy * ow;
      for (std::size_t ox = 0; ox < ow; ++ox) d[ox] = s[ox / factor];
    }
  }
  return x.tape().record(std::move(y), {x}, [xi = x.id(), planes, h, w, factor](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    Tensor& acc = tape.grad_accumulator(xi);
    const std::size_t oh = h * factor, ow = w * factor;
    std::vector<double> sums(h * w);
    for (std::size_t p = 0; p < planes; ++p) {
      std::fill(sums.begin(), sums.end(), 0.0);
      const float* src = g.data() + p * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        double* row = sums.data() + (oy / factor) * w;
        const float* s = src + oy * ow;
        for (std::size_t ox = 0; ox < ow; ++ox) row[ox / factor] += s[ox];
      }
      float* dst = acc.data() + p * h * w;
      for (std::size_t i = 0; i < h * w; ++i) dst[i] += static_cast<float>(sums[i]);
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape& first = parts[0].value().shape();
  if (first.size() < 2) throw std::invalid_argument("concat_channels: rank must be >= 2, got " + to_string(first));
  std::size_t channels = 0;
  std::vector<std::size_t> widths;
  for (const Var& part : parts) {
    const Shape& s = part.value().shape();
    bool compatible = s.size() == first.size() && s[0] == first[0];
    for (std::size_t a = 2; compatible && a < s.size(); ++a) compatible = s[a] == first[a];
    if (!compatible) {
      throw std::invalid_argument("concat_channels: " + to_string(s) + " incompatible with " + to_string(first));
    }
    channels += s[1];
    widths.push_back(element_count(s) / s[0]);
  }
  Shape out_shape = first;
  out_shape[1] = channels;
  Tensor y(out_shape);
  const std::size_t batch = first[0];
  const std::size_t row = element_count(out_shape) / batch;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const float* src = parts[k].value().data();
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy_n(src + n * widths[k], widths[k], y.data() + n * row + offset);
    }
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& part : parts) ids.push_back(part.id());
  return parts[0].tape().record(std::move(y), parts, [ids, widths, batch, row](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tape.needs_grad(ids[k])) {
        Tensor& acc = tape.grad_accumulator(ids[k]);
        for (std::size_t n = 0; n < batch; ++n) {
          const float* src = g.data() + n * row + offset;
          float* dst = acc.data() + n * widths[k];
          for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
        }
      }
      offset += widths[k];
    }
  });
}

Var bce_with_logits(Var logits, const Tensor& targets, const Tensor& mask) {
  const Tensor& z = logits.value();
  require_same_shape(z, targets, "bce_with_logits targets");
  require_same_shape(z, mask, "bce_with_logits mask");
  double sum = 0.0;
  double weight = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask[i] == 0.0f) continue;
    sum += mask[i] * bce_term(z[i], targets[i]);
    weight += mask[i];
  }
  if (weight == 0.0) {
    log::warn("bce_with_logits: mask excludes every element; loss defined as 0");
  }
  const double loss = weight > 0.0 ? sum / weight : 0.0;
  return logits.tape().record(
      Tensor::scalar(static_cast<float>(loss)), {logits},
      [zi = logits.id(), targets, mask, weight](Tape& tape, std::size_t self) {
        if (weight == 0.0) return;
        const double g = tape.grad(self)[0] / weight;
        const Tensor& z = tape.value(zi);
        Tensor& acc = tape.grad_accumulator(zi);
        for (std::size_t i = 0; i < z.size(); ++i) {
          if (mask[i] == 0.0f) continue;
          acc[i] += static_cast<float>(g * mask[i] * (stable_sigmoid(z[i]) - targets[i]));
        }
      });
}

Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.empty() || scalars.size() != weights.size()) {
    throw std::invalid_argument("weighted_sum: need one weight per scalar");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1) {
      throw std::invalid_argument("weighted_sum: operand " + std::to_string(i) + " is not a scalar");
    }
    total += weights[i] * scalars[i].value()[0];
  }
  std::vector<std::size_t> ids;
  for (const Var& s : scalars) ids.push_back(s.id());
  std::vector<double> w(weights.begin(), weights.end());
  return scalars[0].tape().record(Tensor::scalar(static_cast<float>(total)), scalars,
                                  [ids, w](Tape& tape, std::size_t self) {
                                    const double g = tape.grad(self)[0];
                                    for (std::size_t i = 0; i < ids.size(); ++i) {
                                      if (tape.needs_grad(ids[i])) {
                                        tape.grad_accumulator(ids[i])[0] += static_cast<float>(g * w[i]);
                                      }
                                    }
                                  });
}

Var dot(Var x, const Tensor& weights) {
  require_same_shape(x.value(), weights, "dot");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += static_cast<double>(x.value()[i]) * weights[i];
  return x.tape().record(Tensor::scalar(static_cast<float>(total)), {x},
                         [xi = x.id(), weights](Tape& tape, std::size_t self) {
                           const double g = tape.grad(self)[0];
                           Tensor& acc = tape.grad_accumulator(xi);
                           for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<float>(g * weights[i]);
                         });
}

}  // namespace ipseg::nn
