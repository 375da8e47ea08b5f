#pragma once

#include <cstddef>
#include <vector>

#include "ipseg/grid.hpp"
#include "ipseg/inference.hpp"

namespace ipseg {

/// Old-category guesses of the previous model; code 0 means no guess.
struct PixelPseudoLabel {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<CategoryId> codes;
  std::vector<float> confidence;

  static PixelPseudoLabel none(std::size_t width, std::size_t height);
  std::size_t coverage(int category) const;
};

/// A pixel gets old category c when c wins the fused argmax and its fused
/// score exceeds tau. `old` restricts the admissible codes.
PixelPseudoLabel pixel_pseudo_label(const FusedPrediction& previous, CategorySet old, double tau);

/// Runs `previous` on one image; a null model (first step) yields no guesses.
PixelPseudoLabel pixel_pseudo_label(const IncrementalModel* previous, const SceneImage& image, double tau,
                                    const InferenceOptions& options);

/// Permanent-branch target over {0 = pure background, 254 = unknown
/// foreground, 255 = ignore}:
///   255 if y in C_t, or y is background and the pseudo label names an old category;
///   254 if y is background, no pseudo label and salient;
///   0   otherwise.
/// Throws std::invalid_argument if y holds sentinel codes or sizes differ.
LabelMap reassign_permanent(const GroundTruthMap& y, CategorySet current, const PixelPseudoLabel& pseudo,
                            const SaliencyMap& saliency);

/// Temporary-branch target over C_t, 253 (other foreground) and 0:
///   y if y in C_t; 253 if y is background and salient; 0 otherwise.
LabelMap reassign_temporary(const GroundTruthMap& y, CategorySet current, const SaliencyMap& saliency);

/// Annotated categories plus every old category whose pseudo-label coverage
/// reaches rho * H * W. Without a pseudo label the result is `annotated`.
CategorySet image_pseudo_label(CategorySet annotated, const PixelPseudoLabel* pseudo, CategorySet old, double rho);

}  // namespace ipseg
