#include "ipseg/inference.hpp"

#include <algorithm>
#include <iomanip>
#include <stdexcept>

#include "ipseg/nn/ops.hpp"

namespace ipseg {

using nn::Tensor;

std::size_t FusedPrediction::channel_of(int code) const {
  for (std::size_t k = 0; k < codes.size(); ++k) {
    if (codes[k] == code) return k;
  }
  throw std::out_of_range("category " + std::to_string(code) + " is not predicted by this model");
}

std::vector<HeadLayout> head_layouts(const IncrementalModel& model) {
  std::vector<HeadLayout> out;
  for (std::size_t t = 1; t <= model.step_count(); ++t) out.push_back(model.head_layout(t));
  return out;
}

namespace {

std::vector<CategoryId> channel_codes(std::span<const HeadLayout> layouts) {
  CategorySet seen;
  for (const HeadLayout& l : layouts) seen = seen | l.categories;
  std::vector<CategoryId> codes{codes::kBackground};
  for (CategoryId c : seen.members()) codes.push_back(c);
  return codes;
}

void check_plane(const Tensor& t, std::size_t channels, std::size_t h, std::size_t w, const char* what) {
  if (t.rank() != 3 || t.dim(0) != channels || t.dim(1) != h || t.dim(2) != w) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(channels) + "x" +
                                std::to_string(h) + "x" + std::to_string(w) + ", got " + nn::to_string(t.shape()));
  }
}

}  // namespace

Tensor aggregate_pixel_logits(const ImageLogits& logits, std::span<const HeadLayout> layouts,
                              bool permanent_background) {
  if (layouts.empty() || logits.heads.size() != layouts.size()) {
    throw std::invalid_argument("aggregate_pixel_logits: " + std::to_string(logits.heads.size()) +
                                " head outputs for " + std::to_string(layouts.size()) + " heads");
  }
  const std::size_t h = logits.permanent.dim(1);
  const std::size_t w = logits.permanent.dim(2);
  const std::size_t plane = h * w;
  check_plane(logits.permanent, 2, h, w, "permanent head logits");
  const auto codes = channel_codes(layouts);
  Tensor out({codes.size(), h, w});
  const float* background = permanent_background
                                ? logits.permanent.data() + kPermanentBackground * plane
                                : logits.heads.back().data() + layouts.back().background_channel() * plane;
  std::copy_n(background, plane, out.data());
  for (std::size_t t = 0; t < layouts.size(); ++t) {
    check_plane(logits.heads[t], layouts[t].channels(), h, w, "temporary head logits");
    const auto members = layouts[t].categories.members();
    for (std::size_t j = 0; j < members.size(); ++j) {
      const std::size_t k = static_cast<std::size_t>(std::find(codes.begin(), codes.end(), members[j]) - codes.begin());
      std::copy_n(logits.heads[t].data() + j * plane, plane, out.data() + k * plane);
    }
  }
  return out;
}

Tensor fuse(const Tensor& pixel_logits, std::span<const float> posterior_logits, double alpha_bc) {
  if (pixel_logits.rank() != 3) {
    throw std::invalid_argument("fuse: pixel logits must be C x H x W, got " + nn::to_string(pixel_logits.shape()));
  }
  const std::size_t channels = pixel_logits.dim(0);
  const bool use_posterior = !posterior_logits.empty();
  if (use_posterior && posterior_logits.size() + 1 != channels) {
    throw std::invalid_argument("fuse: " + std::to_string(channels) + " pixel channels need " +
                                std::to_string(channels - 1) + " posterior logits, got " +
                                std::to_string(posterior_logits.size()));
  }
  const std::size_t plane = pixel_logits.dim(1) * pixel_logits.dim(2);
  Tensor out(pixel_logits.shape());
  for (std::size_t k = 0; k < channels; ++k) {
    double factor = 1.0;
    if (use_posterior) factor = k == 0 ? alpha_bc : nn::stable_sigmoid(posterior_logits[k - 1]);
    const float* src = pixel_logits.data() + k * plane;
    float* dst = out.data() + k * plane;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = static_cast<float>(factor * nn::stable_sigmoid(src[p]));
  }
  return out;
}

void noise_filter(Tensor& scores, std::span<const Tensor> head_logits, std::span<const HeadLayout> layouts,
                  double alpha_nf) {
  if (head_logits.size() != layouts.size()) {
    throw std::invalid_argument("noise_filter: head count mismatch");
  }
  const auto codes = channel_codes(layouts);
  if (scores.rank() != 3 || scores.dim(0) != codes.size()) {
    throw std::invalid_argument("noise_filter: scores " + nn::to_string(scores.shape()) + " do not have " +
                                std::to_string(codes.size()) + " channels");
  }
  const std::size_t h = scores.dim(1);
  const std::size_t w = scores.dim(2);
  const std::size_t plane = h * w;
  const auto factor = static_cast<float>(alpha_nf);
  for (std::size_t t = 0; t < layouts.size(); ++t) {
    check_plane(head_logits[t], layouts[t].channels(), h, w, "noise_filter head logits");
    const float* other = head_logits[t].data() + layouts[t].other_foreground_channel() * plane;
    const auto members = layouts[t].categories.members();
    for (std::size_t j = 0; j < members.size(); ++j) {
      const std::size_t k = static_cast<std::size_t>(std::find(codes.begin(), codes.end(), members[j]) - codes.begin());
      const float* own = head_logits[t].data() + j * plane;
      float* s = scores.data() + k * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        if (other[p] >= own[p]) s[p] *= factor;
      }
    }
  }
}

DecisionMap decide(const Tensor& scores, std::span<const CategoryId> codes) {
  if (scores.rank() != 3 || scores.dim(0) != codes.size()) {
    throw std::invalid_argument("decide: scores " + nn::to_string(scores.shape()) + " vs " +
                                std::to_string(codes.size()) + " codes");
  }
  const std::size_t plane = scores.dim(1) * scores.dim(2);
  DecisionMap out(scores.dim(2), scores.dim(1));
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    float best_score = scores[p];
    for (std::size_t k = 1; k < codes.size(); ++k) {
      const float s = scores[k * plane + p];
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    out[p] = codes[best];
  }
  return out;
}

FusedPrediction fuse_image(const ImageLogits& logits, std::span<const HeadLayout> layouts,
                           const InferenceOptions& options) {
  FusedPrediction out;
  out.codes = channel_codes(layouts);
  const Tensor pixel = aggregate_pixel_logits(logits, layouts, options.permanent_background);
  out.scores = fuse(pixel, options.image_posterior ? std::span<const float>(logits.posterior)
                                                   : std::span<const float>(),
                    options.alpha_bc);
  if (options.noise_filter) noise_filter(out.scores, logits.heads, layouts, options.alpha_nf);
  out.decision = decide(out.scores, out.codes);
  for (float z : logits.posterior) out.posterior.push_back(static_cast<float>(nn::stable_sigmoid(z)));
  return out;
}

std::vector<ImageLogits> compute_logits(const IncrementalModel& model, std::span<const SceneImage* const> images) {
  nn::Tape tape(false);
  nn::Var x = tape.constant(IncrementalModel::image_batch(images));
  nn::Var features = model.features(tape, x);
  const PixelLogits pixel = model.forward_pixel(tape, features);
  const Tensor& posterior = model.forward_posterior(tape, features).value();

  auto slice = [](const Tensor& batch, std::size_t n) {
    const std::size_t per = batch.size() / batch.dim(0);
    nn::Shape shape(batch.shape().begin() + 1, batch.shape().end());
    return Tensor(std::move(shape), std::vector<float>(batch.data() + n * per, batch.data() + (n + 1) * per));
  };
  std::vector<ImageLogits> out(images.size());
  const std::size_t k = posterior.dim(1);
  for (std::size_t n = 0; n < images.size(); ++n) {
    out[n].permanent = slice(pixel.permanent.value(), n);
    for (const nn::Var& head : pixel.heads) out[n].heads.push_back(slice(head.value(), n));
    out[n].posterior.assign(posterior.data() + n * k, posterior.data() + (n + 1) * k);
  }
  return out;
}

std::vector<FusedPrediction> predict(const IncrementalModel& model, std::span<const SceneImage* const> images,
                                     const InferenceOptions& options, std::size_t batch_size) {
  const auto layouts = head_layouts(model);
  std::vector<FusedPrediction> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const auto chunk = images.subspan(start, std::min(batch_size, images.size() - start));
    for (const ImageLogits& logits : compute_logits(model, chunk)) out.push_back(fuse_image(logits, layouts, options));
  }
  return out;
}

double DriftReport::margin(int region, int other, bool image_posterior) const {
  double own = 0.0;
  double confused = 0.0;
  bool found_own = false;
  bool found_confused = false;
  for (const DriftRow& r : rows) {
    if (r.region != region || r.image_posterior != image_posterior) continue;
    if (r.scored == region) {
      own = r.mean_fused;
      found_own = true;
    } else if (r.scored == other) {
      confused = r.mean_fused;
      found_confused = true;
    }
  }
  if (!found_own || !found_confused) {
    throw std::out_of_range("drift report has no rows for region " + std::to_string(region));
  }
  return own - confused;
}

void DriftReport::write_csv(std::ostream& out) const {
  out << "# schema ipseg-drift 1\n";
  out << "region,class,image_posterior,mean_unfused,mean_fused,pixels\n";
  out << std::fixed << std::setprecision(6);
  for (const DriftRow& r : rows) {
    out << r.region << ',' << r.scored << ',' << (r.image_posterior ? "on" : "off") << ',' << r.mean_unfused << ','
        << r.mean_fused << ',' << r.pixels << '\n';
  }
}

DriftReport drift_probe(const IncrementalModel& model, std::span<const Sample> probe, int first, int second,
                        const InferenceOptions& options) {
  const CategorySet seen = model.seen_categories();
  if (!seen.contains(first) || !seen.contains(second)) {
    throw std::invalid_argument("drift_probe: model has not learned both categories " + std::to_string(first) +
                                " and " + std::to_string(second));
  }
  std::vector<const Sample*> selected;
  for (const Sample& s : probe) {
    if (s.categories.contains(first) || s.categories.contains(second)) selected.push_back(&s);
  }
  const auto layouts = head_layouts(model);
  const int pair[2] = {first, second};

  struct Accumulator {
    double unfused = 0.0, fused = 0.0;
    std::size_t pixels = 0;
  };
  // [ip on/off][region][scored]
  Accumulator acc[2][2][2];
  for (std::size_t start = 0; start < selected.size(); start += 16) {
    std::vector<const SceneImage*> images;
    for (std::size_t i = start; i < std::min(selected.size(), start + 16); ++i) images.push_back(&selected[i]->image);
    const auto logits = compute_logits(model, images);
    for (std::size_t n = 0; n < logits.size(); ++n) {
      const GroundTruthMap& truth = selected[start + n]->truth;
      const Tensor pixel = aggregate_pixel_logits(logits[n], layouts, options.permanent_background);
      for (int mode = 0; mode < 2; ++mode) {
        InferenceOptions o = options;
        o.image_posterior = mode == 0;
        const FusedPrediction fused = fuse_image(logits[n], layouts, o);
        const std::size_t plane = truth.size();
        for (int r = 0; r < 2; ++r) {
          for (int s = 0; s < 2; ++s) {
            const std::size_t k = fused.channel_of(pair[s]);
            Accumulator& a = acc[mode][r][s];
            for (std::size_t p = 0; p < plane; ++p) {
              if (truth[p] != pair[r]) continue;
              a.unfused += nn::stable_sigmoid(pixel[k * plane + p]);
              a.fused += fused.scores[k * plane + p];
              ++a.pixels;
            }
          }
        }
      }
    }
  }
  DriftReport report;
  for (int mode = 0; mode < 2; ++mode) {
    for (int r = 0; r < 2; ++r) {
      for (int s = 0; s < 2; ++s) {
        const Accumulator& a = acc[mode][r][s];
        const double n = a.pixels > 0 ? static_cast<double>(a.pixels) : 1.0;
        report.rows.push_back({pair[r], pair[s], mode == 0, a.unfused / n, a.fused / n, a.pixels});
      }
    }
  }
  return report;
}

}  // namespace ipseg
