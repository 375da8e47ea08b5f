#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ipseg/grid.hpp"
#include "ipseg/model.hpp"
#include "ipseg/nn/tensor.hpp"

namespace ipseg {

struct InferenceOptions {
  bool image_posterior = true;       // rectify pixel scores by the image posterior
  bool noise_filter = true;          // down-weight categories beaten by their head's other-foreground channel
  bool permanent_background = true;  // background score from the permanent head (else from the newest head)
  double alpha_bc = 0.9;
  double alpha_nf = 0.4;
};

/// Logits of one image, sliced out of a batch.
struct ImageLogits {
  nn::Tensor permanent;            // 2 x H x W
  std::vector<nn::Tensor> heads;   // (|C_t| + 2) x H x W
  std::vector<float> posterior;    // |C_{1:t}|, ascending category order
};

/// Score channel k belongs to codes[k]: background first, then seen categories ascending.
struct FusedPrediction {
  std::vector<CategoryId> codes;
  nn::Tensor scores;              // (1 + |C_{1:t}|) x H x W, in [0, 1]
  DecisionMap decision;
  std::vector<float> posterior;   // sigmoid of the posterior logits

  std::size_t channel_of(int code) const;
};

/// Background logit followed by every head's category channels, reordered
/// to ascending category code: 1 + |C_{1:t}| channels.
nn::Tensor aggregate_pixel_logits(const ImageLogits& logits, std::span<const HeadLayout> layouts,
                                  bool permanent_background);

/// concat(alpha_bc, sigmoid(posterior)) * sigmoid(pixel_logits), per channel.
/// An empty posterior means the posterior is switched off: every factor is 1.
nn::Tensor fuse(const nn::Tensor& pixel_logits, std::span<const float> posterior_logits, double alpha_bc);

/// For every pixel and every category c of head t: when head t's
/// other-foreground logit is at least c's logit, c's score is multiplied by
/// alpha_nf. `scores` uses the layout of aggregate_pixel_logits.
void noise_filter(nn::Tensor& scores, std::span<const nn::Tensor> head_logits, std::span<const HeadLayout> layouts,
                  double alpha_nf);

/// Per-pixel argmax over channels; ties go to the lowest code.
DecisionMap decide(const nn::Tensor& scores, std::span<const CategoryId> codes);

/// Full per-image pipeline on already computed logits.
FusedPrediction fuse_image(const ImageLogits& logits, std::span<const HeadLayout> layouts,
                           const InferenceOptions& options);

/// Runs the model (no gradients) on a batch and slices the result per image.
std::vector<ImageLogits> compute_logits(const IncrementalModel& model, std::span<const SceneImage* const> images);

std::vector<FusedPrediction> predict(const IncrementalModel& model, std::span<const SceneImage* const> images,
                                     const InferenceOptions& options, std::size_t batch_size = 16);

std::vector<HeadLayout> head_layouts(const IncrementalModel& model);

/// One row of the separate-optimisation probe: over pixels whose true
/// category is `region`, the mean score assigned to `scored`.
struct DriftRow {
  int region;
  int scored;
  bool image_posterior;
  double mean_unfused;
  double mean_fused;
  std::size_t pixels;
};

struct DriftReport {
  std::vector<DriftRow> rows;

  /// mean_fused(region, region) - mean_fused(region, other).
  double margin(int region, int other, bool image_posterior) const;
  void write_csv(std::ostream& out) const;
};

/// Scores the confusable pair on every image that shows either category,
/// once with and once without the image posterior (other options as given).
DriftReport drift_probe(const IncrementalModel& model, std::span<const Sample> probe, int first, int second,
                        const InferenceOptions& options);

}  // namespace ipseg
