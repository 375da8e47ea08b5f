#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ipseg/image.hpp"

namespace ipseg {

/// M-N incremental schedule: M categories in the first step, then N per step.
struct ScenarioConfig {
  int num_categories = 6;
  int initial_count = 4;
  int per_step = 2;
  bool overlap = true;

  /// Throws std::invalid_argument when the schedule does not tile 1..K.
  void validate() const;
  std::size_t step_count() const;
  /// Step t (1-based) owns steps()[t - 1]; categories ascend across steps.
  std::vector<CategorySet> steps() const;
  /// C_{1:t}.
  CategorySet seen_through(std::size_t step) const;
};

/// One sample of D_t: an index into the corpus and its step-t annotation.
struct StepSample {
  std::size_t index;
  GroundTruthMap truth;
  CategorySet categories;
};

struct StepData {
  std::size_t step;
  CategorySet categories;
  std::vector<StepSample> samples;
};

/// Keeps codes in `keep`, maps every other category to background.
GroundTruthMap restrict_labels(const GroundTruthMap& truth, CategorySet keep);

/// Overlap: D_t holds every image showing a category of C_t, with all other
/// categories relabelled background. Disjoint: additionally drops images
/// showing any category of a later step. Throws std::invalid_argument naming
/// the step when a step matches no image.
std::vector<StepData> split_incremental(std::span<const Sample> samples, const ScenarioConfig& scenario);

}  // namespace ipseg
