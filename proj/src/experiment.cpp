#include "ipseg/experiment.hpp"

#include <stdexcept>

#include "ipseg/log.hpp"
#include "ipseg/metrics.hpp"

namespace ipseg {

const VariantMetrics& ExperimentRecord::final_metrics(const std::string& variant) const {
  if (steps.empty()) throw std::out_of_range("experiment " + run + " has no steps");
  for (const VariantMetrics& v : steps.back().variants) {
    if (v.name == variant) return v;
  }
  throw std::out_of_range("experiment " + run + " has no variant " + variant);
}

namespace {

std::vector<int> iou_codes(CategorySet categories, bool background) {
  std::vector<int> out;
  if (background) out.push_back(codes::kBackground);
  for (CategoryId c : categories.members()) out.push_back(c);
  return out;
}

}  // namespace

std::vector<VariantMetrics> evaluate(const IncrementalModel& model, std::span<const Sample> validation,
                                     std::span<const InferenceVariant> variants, CategorySet initial,
                                     bool include_background) {
  const CategorySet seen = model.seen_categories();
  const CategorySet later = seen - initial;
  const auto layouts = head_layouts(model);
  const std::size_t count = variants.size();

  std::vector<IouAccumulator> iou(count);
  std::vector<std::vector<CategorySet>> posterior_sets(count), pixel_sets(count);
  std::vector<CategorySet> truth_sets;

  for (std::size_t start = 0; start < validation.size(); start += 16) {
    const std::size_t end = std::min(validation.size(), start + 16);
    std::vector<const SceneImage*> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(&validation[i].image);
    const auto logits = compute_logits(model, images);
    for (std::size_t i = start; i < end; ++i) {
      GroundTruthMap truth = validation[i].truth;
      for (auto& code : truth.values()) {
        if (code != codes::kBackground && !seen.contains(code)) code = codes::kIgnore;
      }
      truth_sets.push_back(validation[i].categories & seen);
      for (std::size_t v = 0; v < count; ++v) {
        const FusedPrediction fused = fuse_image(logits[i - start], layouts, variants[v].options);
        iou[v].add(fused.decision, truth);
        posterior_sets[v].push_back(posterior_labels(fused.posterior, seen));
        InferenceOptions pixel_only = variants[v].options;
        pixel_only.image_posterior = false;
        const DecisionMap pixel_decision =
            variants[v].options.image_posterior ? fuse_image(logits[i - start], layouts, pixel_only).decision
                                                : fused.decision;
        pixel_sets[v].push_back(pixel_labels(pixel_decision));
      }
    }
  }

  std::vector<VariantMetrics> out;
  for (std::size_t v = 0; v < count; ++v) {
    VariantMetrics m;
    m.name = variants[v].name;
    m.iou = iou[v].per_category(iou_codes(seen, true));
    auto group = [&](CategorySet members, bool background) {
      GroupMetrics g;
      g.miou = iou[v].mean(iou_codes(members, background));
      g.posterior_accuracy = image_level_accuracy(posterior_sets[v], truth_sets, members);
      g.pixel_accuracy = image_level_accuracy(pixel_sets[v], truth_sets, members);
      return g;
    };
    m.groups["initial"] = group(initial, include_background);
    if (!later.empty()) m.groups["new"] = group(later, false);
    m.groups["all"] = group(seen, include_background);
    out.push_back(std::move(m));
  }
  return out;
}

ScenarioOutcome run_scenario(const ExperimentSetup& setup, std::span<const Sample> train,
                             std::span<const Sample> validation) {
  setup.scenario.validate();
  setup.training.validate();
  if (setup.variants.empty()) throw std::invalid_argument("run_scenario needs at least one inference variant");
  const auto steps = split_incremental(train, setup.scenario);
  const CategorySet initial = steps.front().categories;

  std::vector<SceneImage> images;
  images.reserve(train.size());
  for (const Sample& s : train) images.push_back(s.image);
  const auto saliency = corpus_saliency(train, setup.training);

  ScenarioOutcome outcome;
  outcome.record.run = setup.run;
  MemoryBuffer buffer(setup.training.memory_size);
  TrainingHooks hooks = setup.hooks;
  if (setup.events != nullptr) {
    hooks.on_batch = [&setup, inner = setup.hooks.on_batch](const BatchEvent& e) {
      *setup.events << to_json_line(e) << '\n';
      if (inner) inner(e);
    };
  }

  for (const StepData& data : steps) {
    StepInputs inputs;
    if (data.step == 1) {
      outcome.model = std::make_unique<IncrementalModel>(setup.model, data.categories);
      inputs = prepare_step(nullptr, data, buffer, images, saliency, setup.training);
    } else {
      inputs = prepare_step(outcome.model.get(), data, buffer, images, saliency, setup.training);
      outcome.model->grow_for_step(data.categories);
    }
    log::info(setup.run + ": training step " + std::to_string(data.step) + " on " +
              std::to_string(inputs.current.size()) + " images + " + std::to_string(inputs.memory.size()) +
              " memory samples");

    StepRecord record;
    record.step = data.step;
    record.categories = data.categories;
    record.training = train_step(*outcome.model, inputs, images, buffer, setup.training, hooks);
    if (data.step == 1) outcome.model->freeze_backbone();
    record.variants = evaluate(*outcome.model, validation, setup.variants, initial, setup.include_background);

    if (data.step < steps.size()) {
      std::vector<MemorySample> candidates;
      for (const StepSample& s : data.samples) {
        candidates.push_back(make_memory_sample(s.index, train[s.index].image.id, s.categories & data.categories,
                                                saliency[s.index], data.step));
      }
      record.rebalance = buffer.rebalance(candidates, outcome.model->seen_categories());
      for (const Shortfall& f : record.rebalance->shortfalls) {
        log::warn("memory category " + std::to_string(f.category) + " is " + std::to_string(f.missing) +
                  " samples short of its quota");
      }
      for (CategoryId c : outcome.model->seen_categories().members()) record.memory_counts[c] = buffer.count(c);
      record.memory_size = buffer.size();
    }
    if (setup.after_step) setup.after_step(data.step, *outcome.model);
    outcome.record.steps.push_back(std::move(record));
  }
  return outcome;
}

}  // namespace ipseg
