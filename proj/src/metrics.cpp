#include "ipseg/metrics.hpp"

#include <stdexcept>

namespace ipseg {

void IouAccumulator::add(const DecisionMap& prediction, const GroundTruthMap& truth) {
  require_same_dims(prediction, truth, "miou");
  for (std::size_t p = 0; p < truth.size(); ++p) {
    const int t = truth[p];
    if (t == codes::kIgnore) continue;
    const int y = prediction[p];
    ++predicted_[y];
    ++actual_[t];
    if (y == t) ++intersection_[t];
  }
}

std::map<int, double> IouAccumulator::per_category(std::span<const int> codes) const {
  auto get = [](const std::map<int, std::size_t>& m, int k) {
    const auto it = m.find(k);
    return it == m.end() ? std::size_t{0} : it->second;
  };
  std::map<int, double> out;
  for (int c : codes) {
    const std::size_t inter = get(intersection_, c);
    const std::size_t uni = get(predicted_, c) + get(actual_, c) - inter;
    if (uni == 0) continue;
    out[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

double IouAccumulator::mean(std::span<const int> codes) const {
  const auto per = per_category(codes);
  if (per.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [c, iou] : per) sum += iou;
  return sum / static_cast<double>(per.size());
}

IouResult miou(const DecisionMap& prediction, const GroundTruthMap& truth, std::span<const int> codes) {
  IouAccumulator acc;
  acc.add(prediction, truth);
  return {acc.per_category(codes), acc.mean(codes)};
}

double image_level_accuracy(std::span<const CategorySet> predicted, std::span<const CategorySet> truth,
                            CategorySet scope) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("image_level_accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(truth.size()) + " images");
  }
  if (truth.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += (predicted[i] & scope) == (truth[i] & scope) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

CategorySet posterior_labels(std::span<const float> probabilities, CategorySet seen, double threshold) {
  const auto members = seen.members();
  if (members.size() != probabilities.size()) {
    throw std::invalid_argument("posterior_labels: " + std::to_string(probabilities.size()) +
                                " probabilities for " + std::to_string(members.size()) + " categories");
  }
  CategorySet out;
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (probabilities[k] >= threshold) out.insert(members[k]);
  }
  return out;
}

CategorySet pixel_labels(const DecisionMap& decision) {
  CategorySet out;
  for (std::uint8_t c : decision.values()) {
    if (c != codes::kBackground && c <= kMaxCategories) out.insert(c);
  }
  return out;
}

}  // namespace ipseg
