#pragma once

// A small trained scenario shared by tests that need a real model:
// 6 categories, 4-2 overlap, 96 training and 12 validation images of 32x32.

#include <vector>

#include "ipseg/experiment.hpp"
#include "ipseg/shapes_world.hpp"

namespace ipseg::toy {

inline GeneratorConfig data_config(const char* prefix, std::size_t count) {
  GeneratorConfig config;
  config.seed = 42;
  config.num_categories = 6;
  config.sample_count = count;
  config.width = 32;
  config.height = 32;
  config.id_prefix = prefix;
  return config;
}

inline const std::vector<Sample>& train_set() {
  static const std::vector<Sample> corpus = generate_dataset(data_config("train", 96));
  return corpus;
}

inline const std::vector<Sample>& validation_set() {
  static const std::vector<Sample> corpus = generate_dataset(data_config("val", 12));
  return corpus;
}

inline ExperimentSetup setup() {
  ExperimentSetup s;
  s.run = "toy";
  s.training.epochs = 40;
  s.training.memory_size = 8;
  s.variants = {{"full", InferenceOptions{}}};
  return s;
}

/// Trained once per test binary.
inline const ScenarioOutcome& outcome() {
  static const ScenarioOutcome result = run_scenario(setup(), train_set(), validation_set());
  return result;
}

}  // namespace ipseg::toy
