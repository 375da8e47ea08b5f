#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipseg/decoupling.hpp"
#include "ipseg/inference.hpp"
#include "ipseg/memory.hpp"
#include "ipseg/model.hpp"
#include "ipseg/nn/optim.hpp"
#include "ipseg/saliency.hpp"
#include "ipseg/scenario.hpp"

namespace ipseg {

struct TrainingConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  nn::SgdConfig sgd{0.2, 0.9, 1e-4};
  double poly_power = 0.9;
  /// Learning-rate multiplier for the image-posterior branch; max pooling
  /// routes each unit's whole gradient through one pixel.
  double posterior_lr_scale = 0.25;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double mix_ratio = 0.25;
  std::size_t memory_size = 20;
  double pseudo_threshold = 0.7;     // tau
  double coverage_threshold = 0.005; // rho
  bool pseudo_image_labels = true;   // false: posterior trained on annotated labels only
  bool decoupling = true;            // false: no permanent-branch training, background from the newest head
  double saliency_flip_rate = 0.05;
  int saliency_dilation = 1;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
  /// Options used when the previous model produces pseudo-labels. They do
  /// not depend on inference-only switches, so ablation cells that differ
  /// only in those switches train identically.
  InferenceOptions pseudo_label_options() const;
};

/// Loss targets for a batch of N images at step t.
struct BatchTargets {
  nn::Tensor permanent_target, permanent_mask;  // N x 2 x H x W
  nn::Tensor current_target, current_mask;      // N x (|C_t| + 2) x H x W
  nn::Tensor posterior_target, posterior_mask;  // N x |C_{1:t}|
};

/// One-hot encodes the reassigned maps. Permanent maps may hold only
/// {0, 254, 255} (255 becomes mask 0); temporary maps only {0, 253} and the
/// head's categories; image labels must lie within `seen`. Anything else
/// throws std::invalid_argument.
BatchTargets build_targets(std::span<const LabelMap> permanent, std::span<const LabelMap> temporary,
                           std::span<const CategorySet> image_labels, const HeadLayout& head, CategorySet seen);

struct LossVars {
  nn::Var image_posterior;  // L_IP
  nn::Var current;          // L_current
  nn::Var permanent;        // L_p; invalid when the permanent branch is not trained
  nn::Var total;
};

/// L_total = L_IP + lambda1 * L_current + lambda2 * L_p, each a masked mean
/// sigmoid BCE. `permanent_logits` may be invalid, dropping the third term.
LossVars compute_losses(nn::Var posterior_logits, nn::Var current_logits, nn::Var permanent_logits,
                        const BatchTargets& targets, double lambda1, double lambda2);

struct LossValues {
  double image_posterior = 0.0;
  double current = 0.0;
  double permanent = 0.0;
  double total = 0.0;
};

struct BatchEvent {
  std::size_t step;
  std::size_t epoch;
  std::size_t batch;
  std::uint64_t seed;
  double learning_rate;
  std::size_t memory_samples;
  double lambda1;
  double lambda2;  // 0 when the permanent branch is not trained
  LossValues loss;
};

/// Everything a batch's losses were computed from, for independent checks.
struct BatchObservation {
  const BatchEvent& event;
  const BatchTargets& targets;
  const nn::Tensor& posterior_logits;
  const nn::Tensor& current_logits;
  const nn::Tensor* permanent_logits;
};

struct TrainingHooks {
  std::function<void(const BatchEvent&)> on_batch;
  std::function<void(const BatchObservation&)> inspect;
};

/// JSON-lines rendering of a batch event.
std::string to_json_line(const BatchEvent& event);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::uint64_t batch_seed)
      : std::runtime_error(what), batch_seed_(batch_seed) {}
  std::uint64_t batch_seed() const noexcept { return batch_seed_; }

 private:
  std::uint64_t batch_seed_;
};

/// Inputs of one step, with labels already reassigned.
struct PreparedSample {
  std::size_t image_index;
  bool from_memory;
  LabelMap permanent;
  LabelMap temporary;
  CategorySet image_labels;
};

struct StepReport {
  std::size_t step = 0;
  std::size_t batches = 0;
  std::vector<LossValues> epoch_means;
  std::map<std::string, std::uint64_t> digests;  // parameter group -> FNV-1a after training
};

/// Reassigns labels for D_t and the buffer using the step t-1 model
/// (`previous` null at t = 1). Memory samples are treated as fully
/// background-annotated: only their saliency and pseudo-labels shape targets.
struct StepInputs {
  std::vector<PreparedSample> current;
  std::vector<PreparedSample> memory;
};
StepInputs prepare_step(const IncrementalModel* previous, const StepData& data, const MemoryBuffer& buffer,
                        std::span<const SceneImage> images, std::span<const SaliencyMap> saliency,
                        const TrainingConfig& config);

/// Trains the newest head, the permanent head and the posterior branch (and
/// the backbone while it is unfrozen) for config.epochs epochs.
StepReport train_step(IncrementalModel& model, const StepInputs& inputs, std::span<const SceneImage> images,
                      const MemoryBuffer& buffer, const TrainingConfig& config, const TrainingHooks& hooks = {});

/// Salient masks for every image, from its full annotation plus detector noise.
std::vector<SaliencyMap> corpus_saliency(std::span<const Sample> corpus, const TrainingConfig& config);

}  // namespace ipseg
