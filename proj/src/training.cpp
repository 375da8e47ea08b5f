#include "ipseg/training.hpp"

#include <cmath>
#include <json.hpp>

#include "ipseg/log.hpp"
#include "ipseg/nn/ops.hpp"
#include "ipseg/rng.hpp"

namespace ipseg {

using nn::Tensor;
using nn::Var;

void TrainingConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(batch_size > 0, "batch_size must be positive");
  require(sgd.learning_rate > 0.0, "learning_rate must be positive");
  require(sgd.momentum >= 0.0 && sgd.momentum < 1.0, "momentum must lie in [0, 1)");
  require(sgd.weight_decay >= 0.0, "weight_decay must be non-negative");
  require(lambda1 > 0.0 && lambda2 > 0.0, "lambda1 and lambda2 must be positive");
  require(posterior_lr_scale > 0.0, "posterior_lr_scale must be positive");
  require(mix_ratio >= 0.0 && mix_ratio <= 1.0, "mix_ratio must lie in [0, 1]");
  require(pseudo_threshold > 0.0 && pseudo_threshold < 1.0, "pseudo_threshold must lie in (0, 1)");
  require(coverage_threshold > 0.0 && coverage_threshold <= 0.05, "coverage_threshold must lie in (0, 0.05]");
  SaliencyNoise{saliency_flip_rate, saliency_dilation, seed}.validate();
}

InferenceOptions TrainingConfig::pseudo_label_options() const {
  InferenceOptions o;
  o.image_posterior = false;
  o.noise_filter = false;
  o.permanent_background = decoupling;
  return o;
}

BatchTargets build_targets(std::span<const LabelMap> permanent, std::span<const LabelMap> temporary,
                           std::span<const CategorySet> image_labels, const HeadLayout& head, CategorySet seen) {
  const std::size_t n = permanent.size();
  if (n == 0 || temporary.size() != n || image_labels.size() != n) {
    throw std::invalid_argument("build_targets: batch components disagree in size");
  }
  const std::size_t w = permanent[0].width();
  const std::size_t h = permanent[0].height();
  const std::size_t plane = w * h;
  const std::size_t channels = head.channels();
  const auto members = head.categories.members();
  const auto seen_members = seen.members();

  BatchTargets t;
  t.permanent_target = Tensor({n, 2, h, w});
  t.permanent_mask = Tensor({n, 2, h, w}, 1.0f);
  t.current_target = Tensor({n, channels, h, w});
  t.current_mask = Tensor({n, channels, h, w}, 1.0f);
  t.posterior_target = Tensor({n, seen_members.size()});
  t.posterior_mask = Tensor({n, seen_members.size()}, 1.0f);

  for (std::size_t i = 0; i < n; ++i) {
    const LabelMap& p = permanent[i];
    const LabelMap& q = temporary[i];
    if (p.width() != w || p.height() != h || q.width() != w || q.height() != h) {
      throw std::invalid_argument("build_targets: label maps of one batch must share dimensions");
    }
    float* pt = t.permanent_target.data() + i * 2 * plane;
    float* pm = t.permanent_mask.data() + i * 2 * plane;
    float* ct = t.current_target.data() + i * channels * plane;
    for (std::size_t px = 0; px < plane; ++px) {
      switch (p[px]) {
        case codes::kBackground: pt[kPermanentBackground * plane + px] = 1.0f; break;
        case codes::kUnknownForeground: pt[kPermanentUnknown * plane + px] = 1.0f; break;
        case codes::kIgnore:
          pm[px] = 0.0f;
          pm[plane + px] = 0.0f;
          break;
        default:
          throw std::invalid_argument("build_targets: code " + std::to_string(p[px]) +
                                      " is not legal in a permanent-branch label");
      }
      const std::uint8_t code = q[px];
      std::size_t channel;
      if (code == codes::kBackground) {
        channel = head.background_channel();
      } else if (code == codes::kOtherForeground) {
        channel = head.other_foreground_channel();
      } else if (head.categories.contains(code)) {
        channel = static_cast<std::size_t>(std::find(members.begin(), members.end(), code) - members.begin());
      } else {
        throw std::invalid_argument("build_targets: code " + std::to_string(code) +
                                    " is not legal in a temporary-branch label for " + head.categories.to_string());
      }
      ct[channel * plane + px] = 1.0f;
    }
    if (!image_labels[i].is_subset_of(seen)) {
      throw std::invalid_argument("build_targets: image labels " + image_labels[i].to_string() +
                                  " exceed seen categories " + seen.to_string());
    }
    for (std::size_t k = 0; k < seen_members.size(); ++k) {
      t.posterior_target[i * seen_members.size() + k] = image_labels[i].contains(seen_members[k]) ? 1.0f : 0.0f;
    }
  }
  return t;
}

LossVars compute_losses(Var posterior_logits, Var current_logits, Var permanent_logits, const BatchTargets& targets,
                        double lambda1, double lambda2) {
  LossVars out;
  out.image_posterior = nn::bce_with_logits(posterior_logits, targets.posterior_target, targets.posterior_mask);
  out.current = nn::bce_with_logits(current_logits, targets.current_target, targets.current_mask);
  std::vector<Var> terms{out.image_posterior, out.current};
  std::vector<double> weights{1.0, lambda1};
  if (permanent_logits.valid()) {
    out.permanent = nn::bce_with_logits(permanent_logits, targets.permanent_target, targets.permanent_mask);
    terms.push_back(out.permanent);
    weights.push_back(lambda2);
  }
  out.total = nn::weighted_sum(terms, weights);
  return out;
}

std::string to_json_line(const BatchEvent& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["epoch"] = e.epoch;
  j["batch"] = e.batch;
  j["seed"] = e.seed;
  j["lr"] = e.learning_rate;
  j["memory_samples"] = e.memory_samples;
  j["lambda1"] = e.lambda1;
  j["lambda2"] = e.lambda2;
  j["l_ip"] = e.loss.image_posterior;
  j["l_current"] = e.loss.current;
  j["l_p"] = e.loss.permanent;
  j["l_total"] = e.loss.total;
  return j.dump();
}

std::vector<SaliencyMap> corpus_saliency(std::span<const Sample> corpus, const TrainingConfig& config) {
  std::vector<SaliencyMap> out;
  out.reserve(corpus.size());
  for (const Sample& s : corpus) {
    SaliencyNoise noise{config.saliency_flip_rate, config.saliency_dilation,
                        derive_seed(config.seed, "saliency/" + s.image.id)};
    out.push_back(oracle_saliency(s.truth, noise));
  }
  return out;
}

StepInputs prepare_step(const IncrementalModel* previous, const StepData& data, const MemoryBuffer& buffer,
                        std::span<const SceneImage> images, std::span<const SaliencyMap> saliency,
                        const TrainingConfig& config) {
  const CategorySet old = previous ? previous->seen_categories() : CategorySet{};
  const InferenceOptions options = config.pseudo_label_options();

  // Previous-model guesses for every image of the step, batched.
  auto pseudo_for = [&](const std::vector<std::size_t>& indices) {
    std::vector<PixelPseudoLabel> out;
    if (previous == nullptr) {
      for (std::size_t i : indices) out.push_back(PixelPseudoLabel::none(images[i].width, images[i].height));
      return out;
    }
    std::vector<const SceneImage*> batch;
    for (std::size_t i : indices) batch.push_back(&images[i]);
    for (const FusedPrediction& p : predict(*previous, batch, options)) {
      out.push_back(pixel_pseudo_label(p, old, config.pseudo_threshold));
    }
    return out;
  };
  auto image_labels = [&](CategorySet annotated, const PixelPseudoLabel& pseudo) {
    if (!config.pseudo_image_labels || previous == nullptr) return annotated;
    return image_pseudo_label(annotated, &pseudo, old, config.coverage_threshold);
  };

  StepInputs inputs;
  std::vector<std::size_t> current_indices;
  for (const StepSample& s : data.samples) current_indices.push_back(s.index);
  const auto current_pseudo = pseudo_for(current_indices);
  for (std::size_t k = 0; k < data.samples.size(); ++k) {
    const StepSample& s = data.samples[k];
    const SaliencyMap& sal = saliency[s.index];
    inputs.current.push_back({s.index, false, reassign_permanent(s.truth, data.categories, current_pseudo[k], sal),
                              reassign_temporary(s.truth, data.categories, sal),
                              image_labels(s.categories & data.categories, current_pseudo[k])});
  }

  std::vector<std::size_t> memory_indices;
  for (const MemorySample& m : buffer.samples()) memory_indices.push_back(m.image_index);
  const auto memory_pseudo = pseudo_for(memory_indices);
  for (std::size_t k = 0; k < buffer.size(); ++k) {
    const MemorySample& m = buffer.samples()[k];
    const SaliencyMap sal = m.saliency();
    const GroundTruthMap background(sal.width(), sal.height());
    inputs.memory.push_back({m.image_index, true, reassign_permanent(background, data.categories, memory_pseudo[k], sal),
                             reassign_temporary(background, data.categories, sal),
                             image_labels(m.labels, memory_pseudo[k])});
  }
  return inputs;
}

StepReport train_step(IncrementalModel& model, const StepInputs& inputs, std::span<const SceneImage> images,
                      const MemoryBuffer& buffer, const TrainingConfig& config, const TrainingHooks& hooks) {
  config.validate();
  const std::size_t step = model.step_count();
  const HeadLayout& head = model.head_layout(step);
  const CategorySet seen = model.seen_categories();
  const bool train_permanent = config.decoupling;
  const double lambda2 = train_permanent ? config.lambda2 : 0.0;
  if (inputs.memory.size() != buffer.size()) {
    throw std::invalid_argument("train_step: prepared memory does not match the buffer");
  }

  auto params = model.parameters();
  std::vector<nn::Parameter*> trainable;
  for (nn::Parameter* p : params) {
    if (p->frozen) continue;
    if (!train_permanent && p->name.rfind("permanent.", 0) == 0) continue;
    trainable.push_back(p);
  }
  nn::zero_grad(trainable);
  std::vector<nn::Parameter*> posterior_params, other_params;
  for (nn::Parameter* p : trainable) {
    (p->name.rfind("posterior.", 0) == 0 ? posterior_params : other_params).push_back(p);
  }

  // With a frozen backbone the features of an image never change.
  std::map<std::size_t, Tensor> feature_cache;
  auto cached_features = [&](std::size_t index) -> const Tensor& {
    auto it = feature_cache.find(index);
    if (it != feature_cache.end()) return it->second;
    nn::Tape tape(false);
    const SceneImage* one[] = {&images[index]};
    Tensor f = model.features(tape, tape.constant(IncrementalModel::image_batch(one))).value();
    return feature_cache.emplace(index, f.reshaped(nn::Shape(f.shape().begin() + 1, f.shape().end()))).first->second;
  };

  StepReport report;
  report.step = step;
  const std::size_t batches_per_epoch =
      plan_epoch(buffer, inputs.current.size(), config.mix_ratio, config.batch_size, 0).size();
  const std::size_t total_iterations = batches_per_epoch * config.epochs;
  std::size_t iteration = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(config.seed, "epoch/" + std::to_string(step) + "/" + std::to_string(epoch));
    const auto plan = plan_epoch(buffer, inputs.current.size(), config.mix_ratio, config.batch_size, epoch_seed);
    LossValues sum;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const std::uint64_t batch_seed = derive_seed(epoch_seed, b);
      std::vector<const PreparedSample*> samples;
      for (const BatchEntry& e : plan[b]) samples.push_back(e.from_memory ? &inputs.memory[e.index] : &inputs.current[e.index]);

      std::vector<LabelMap> perm, temp;
      std::vector<CategorySet> labels;
      std::size_t memory_count = 0;
      for (const PreparedSample* s : samples) {
        perm.push_back(s->permanent);
        temp.push_back(s->temporary);
        labels.push_back(s->image_labels);
        memory_count += s->from_memory ? 1 : 0;
      }
      const BatchTargets targets = build_targets(perm, temp, labels, head, seen);

      nn::Tape tape;
      Var features;
      if (model.backbone_frozen()) {
        const Tensor& first = cached_features(samples[0]->image_index);
        const std::size_t per = first.size();
        nn::Shape shape{samples.size()};
        shape.insert(shape.end(), first.shape().begin(), first.shape().end());
        Tensor batch(shape);
        for (std::size_t i = 0; i < samples.size(); ++i) {
          const Tensor& f = cached_features(samples[i]->image_index);
          std::copy_n(f.data(), per, batch.data() + i * per);
        }
        features = tape.constant(std::move(batch));
      } else {
        std::vector<const SceneImage*> batch_images;
        for (const PreparedSample* s : samples) batch_images.push_back(&images[s->image_index]);
        features = model.features(tape, tape.constant(IncrementalModel::image_batch(batch_images)));
      }
      const Var posterior = model.forward_posterior(tape, features);
      const Var current = model.forward_head(tape, features, step);
      const Var permanent = train_permanent ? model.forward_permanent(tape, features) : Var();
      const LossVars losses = compute_losses(posterior, current, permanent, targets, config.lambda1, lambda2);

      BatchEvent event{step, epoch, b, batch_seed,
                       nn::poly_learning_rate(config.sgd.learning_rate, iteration, total_iterations, config.poly_power),
                       memory_count, config.lambda1, lambda2, {}};
      event.loss.image_posterior = losses.image_posterior.value().item();
      event.loss.current = losses.current.value().item();
      event.loss.permanent = permanent.valid() ? losses.permanent.value().item() : 0.0;
      event.loss.total = losses.total.value().item();
      if (!std::isfinite(event.loss.total) || !std::isfinite(event.loss.image_posterior) ||
          !std::isfinite(event.loss.current) || !std::isfinite(event.loss.permanent)) {
        throw TrainingDiverged("training diverged at step " + std::to_string(step) + ", epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(b) + " (batch seed " +
                                   std::to_string(batch_seed) + ")",
                               batch_seed);
      }
      if (hooks.inspect) {
        hooks.inspect({event, targets, posterior.value(), current.value(),
                       permanent.valid() ? &permanent.value() : nullptr});
      }
      tape.backward(losses.total);
      nn::SgdConfig sgd = config.sgd;
      sgd.learning_rate = event.learning_rate;
      nn::sgd_step(other_params, sgd);
      sgd.learning_rate = event.learning_rate * config.posterior_lr_scale;
      nn::sgd_step(posterior_params, sgd);
      nn::zero_grad(trainable);
      if (hooks.on_batch) hooks.on_batch(event);

      sum.image_posterior += event.loss.image_posterior;
      sum.current += event.loss.current;
      sum.permanent += event.loss.permanent;
      sum.total += event.loss.total;
      ++iteration;
    }
    const double n = plan.empty() ? 1.0 : static_cast<double>(plan.size());
    report.epoch_means.push_back({sum.image_posterior / n, sum.current / n, sum.permanent / n, sum.total / n});
    report.batches += plan.size();
    log::debug("step " + std::to_string(step) + " epoch " + std::to_string(epoch) + " loss " +
               std::to_string(sum.total / n));
  }

  report.digests["backbone"] = model.group_digest("backbone");
  report.digests["permanent"] = model.group_digest("permanent");
  report.digests["posterior"] = model.group_digest("posterior");
  for (std::size_t t = 1; t <= model.step_count(); ++t) {
    report.digests["head" + std::to_string(t)] = model.group_digest("head" + std::to_string(t));
  }
  return report;
}

}  // namespace ipseg
