#pragma once

#include <cstdint>

#include "ipseg/grid.hpp"

namespace ipseg {

/// Detector-error model applied on top of the exact foreground union.
struct SaliencyNoise {
  double flip_rate = 0.0;   // [0, 0.3]
  int dilation_radius = 0;  // 0, 1 or 2 (square structuring element)
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for out-of-range settings.
  void validate() const;
};

/// Foreground union of `truth`, dilated, then each pixel flipped
/// independently with probability flip_rate. The flip draw for pixel i depends
/// only on (seed, i), so identical inputs give identical maps.
SaliencyMap oracle_saliency(const GroundTruthMap& truth, const SaliencyNoise& noise);

/// Square dilation with side 2 * radius + 1.
SaliencyMap dilate(const SaliencyMap& mask, int radius);

}  // namespace ipseg
