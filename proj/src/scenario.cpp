#include "ipseg/scenario.hpp"

#include <stdexcept>
#include <string>

namespace ipseg {

void ScenarioConfig::validate() const {
  if (num_categories < 1 || num_categories > kMaxCategories) {
    throw std::invalid_argument("scenario: num_categories out of range: " + std::to_string(num_categories));
  }
  if (initial_count < 1 || initial_count > num_categories) {
    throw std::invalid_argument("scenario: initial count " + std::to_string(initial_count) + " not in [1, " +
                                std::to_string(num_categories) + "]");
  }
  const int rest = num_categories - initial_count;
  if (per_step < 0 || (rest > 0 && per_step == 0) || (per_step > 0 && rest % per_step != 0)) {
    throw std::invalid_argument("scenario: " + std::to_string(initial_count) + "-" + std::to_string(per_step) +
                                " does not tile " + std::to_string(num_categories) + " categories");
  }
}

std::size_t ScenarioConfig::step_count() const {
  validate();
  const int rest = num_categories - initial_count;
  return 1 + (rest == 0 ? 0 : static_cast<std::size_t>(rest / per_step));
}

std::vector<CategorySet> ScenarioConfig::steps() const {
  std::vector<CategorySet> out;
  const std::size_t count = step_count();
  out.push_back(CategorySet::range(1, initial_count));
  for (std::size_t t = 1; t < count; ++t) {
    const int first = initial_count + static_cast<int>(t - 1) * per_step + 1;
    out.push_back(CategorySet::range(first, first + per_step - 1));
  }
  return out;
}

CategorySet ScenarioConfig::seen_through(std::size_t step) const {
  CategorySet seen;
  const auto all = steps();
  for (std::size_t t = 0; t < step && t < all.size(); ++t) seen = seen | all[t];
  return seen;
}

GroundTruthMap restrict_labels(const GroundTruthMap& truth, CategorySet keep) {
  GroundTruthMap out = truth;
  for (auto& code : out.values()) {
    if (!keep.contains(code)) code = codes::kBackground;
  }
  return out;
}

std::vector<StepData> split_incremental(std::span<const Sample> samples, const ScenarioConfig& scenario) {
  const auto steps = scenario.steps();
  std::vector<StepData> out;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    CategorySet future;
    for (std::size_t u = t + 1; u < steps.size(); ++u) future = future | steps[u];

    StepData data{t + 1, steps[t], {}};
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const CategorySet present = samples[i].categories;
      if (!present.intersects(steps[t])) continue;
      if (!scenario.overlap && present.intersects(future)) continue;
      data.samples.push_back({i, restrict_labels(samples[i].truth, steps[t]), present & steps[t]});
    }
    if (data.samples.empty()) {
      throw std::invalid_argument("scenario step " + std::to_string(t + 1) + " (categories " +
                                  steps[t].to_string() + ") matches no image");
    }
    out.push_back(std::move(data));
  }
  return out;
}

}  // namespace ipseg
