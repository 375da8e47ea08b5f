#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ipseg/inference.hpp"
#include "ipseg/memory.hpp"
#include "ipseg/model.hpp"
#include "ipseg/scenario.hpp"
#include "ipseg/training.hpp"

namespace ipseg {

/// A named set of inference switches evaluated on the same trained model.
struct InferenceVariant {
  std::string name;
  InferenceOptions options;
};

struct GroupMetrics {
  double miou = 0.0;
  double posterior_accuracy = 0.0;  // image-level, posterior >= 0.5
  double pixel_accuracy = 0.0;      // image-level, any pixel decided (posterior switched off)
};

struct VariantMetrics {
  std::string name;
  std::map<int, double> iou;
  std::map<std::string, GroupMetrics> groups;  // "initial", "new" (from step 2), "all"
};

struct StepRecord {
  std::size_t step = 0;
  CategorySet categories;
  std::vector<VariantMetrics> variants;
  StepReport training;
  /// Rebalance performed after this step for the next one, if any.
  std::optional<RebalanceReport> rebalance;
  std::map<int, std::size_t> memory_counts;
  std::size_t memory_size = 0;
};

struct ExperimentRecord {
  std::string run;
  std::vector<StepRecord> steps;

  const VariantMetrics& final_metrics(const std::string& variant) const;
};

struct ExperimentSetup {
  std::string run = "run";
  ScenarioConfig scenario;
  ModelConfig model;
  TrainingConfig training;
  std::vector<InferenceVariant> variants;
  bool include_background = true;
  /// JSON-lines batch log; optional.
  std::ostream* events = nullptr;
  TrainingHooks hooks;
  /// Called after each step's training and evaluation.
  std::function<void(std::size_t step, const IncrementalModel& model)> after_step;
};

struct ScenarioOutcome {
  ExperimentRecord record;
  std::unique_ptr<IncrementalModel> model;
};

/// Image-level and pixel metrics of `model` on `validation` for each
/// variant. Pixels of categories the model has not learned yet are ignored.
std::vector<VariantMetrics> evaluate(const IncrementalModel& model, std::span<const Sample> validation,
                                     std::span<const InferenceVariant> variants, CategorySet initial,
                                     bool include_background);

/// Runs every step: pseudo-label with the previous model, grow, train,
/// evaluate, then rebalance the memory with the step's images.
ScenarioOutcome run_scenario(const ExperimentSetup& setup, std::span<const Sample> train,
                             std::span<const Sample> validation);

}  // namespace ipseg
