#include "ipseg/saliency.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "ipseg/rng.hpp"

namespace ipseg {

void SaliencyNoise::validate() const {
  if (!(flip_rate >= 0.0 && flip_rate <= 0.3)) {
    throw std::invalid_argument("saliency flip_rate must lie in [0, 0.3], got " + std::to_string(flip_rate));
  }
  if (dilation_radius < 0 || dilation_radius > 2) {
    throw std::invalid_argument("saliency dilation_radius must be 0, 1 or 2, got " +
                                std::to_string(dilation_radius));
  }
}

SaliencyMap dilate(const SaliencyMap& mask, int radius) {
  if (radius <= 0) return mask;
  const auto w = static_cast<std::ptrdiff_t>(mask.width());
  const auto h = static_cast<std::ptrdiff_t>(mask.height());
  // Separable: a square element is a horizontal pass followed by a vertical one.
  SaliencyMap rows(mask.width(), mask.height());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (std::ptrdiff_t dx = std::max<std::ptrdiff_t>(0, x - radius); dx <= std::min(w - 1, x + radius); ++dx) {
        v |= mask.at(dx, y);
      }
      rows.at(x, y) = v;
    }
  }
  SaliencyMap out(mask.width(), mask.height());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (std::ptrdiff_t dy = std::max<std::ptrdiff_t>(0, y - radius); dy <= std::min(h - 1, y + radius); ++dy) {
        v |= rows.at(x, dy);
      }
      out.at(x, y) = v;
    }
  }
  return out;
}

SaliencyMap oracle_saliency(const GroundTruthMap& truth, const SaliencyNoise& noise) {
  noise.validate();
  SaliencyMap mask(truth.width(), truth.height());
  for (std::size_t i = 0; i < truth.size(); ++i) mask[i] = truth[i] != codes::kBackground ? 1 : 0;
  mask = dilate(mask, noise.dilation_radius);
  if (noise.flip_rate > 0.0) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double u = static_cast<double>(derive_seed(noise.seed, i) >> 11) * 0x1.0p-53;
      if (u < noise.flip_rate) mask[i] ^= 1;
    }
  }
  return mask;
}

}  // namespace ipseg
