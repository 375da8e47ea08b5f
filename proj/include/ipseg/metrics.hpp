#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "ipseg/categories.hpp"
#include "ipseg/grid.hpp"

namespace ipseg {

/// Intersection and union pixel counts accumulated over a dataset.
class IouAccumulator {
 public:
  /// Pixels whose truth is 255 are skipped.
  void add(const DecisionMap& prediction, const GroundTruthMap& truth);

  /// IoU of every code in `codes` that occurs in prediction or truth.
  std::map<int, double> per_category(std::span<const int> codes) const;
  /// Mean of per_category over `codes`; 0 when none occurs.
  double mean(std::span<const int> codes) const;

 private:
  std::map<int, std::size_t> intersection_;
  std::map<int, std::size_t> predicted_;
  std::map<int, std::size_t> actual_;
};

struct IouResult {
  std::map<int, double> per_category;
  double mean = 0.0;
};

/// Single-map mIoU over `codes` (codes absent from both maps are excluded).
IouResult miou(const DecisionMap& prediction, const GroundTruthMap& truth, std::span<const int> codes);

/// Fraction of images whose predicted set, restricted to `scope`, equals
/// the true set restricted to `scope`.
double image_level_accuracy(std::span<const CategorySet> predicted, std::span<const CategorySet> truth,
                            CategorySet scope);

/// Categories with a posterior probability at or above `threshold`;
/// probabilities are indexed like seen.members().
CategorySet posterior_labels(std::span<const float> probabilities, CategorySet seen, double threshold = 0.5);

/// Categories owning at least one pixel of a decision map.
CategorySet pixel_labels(const DecisionMap& decision);

}  // namespace ipseg
