#include "ipseg/decoupling.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ipseg {

PixelPseudoLabel PixelPseudoLabel::none(std::size_t width, std::size_t height) {
  return {width, height, std::vector<CategoryId>(width * height, 0), std::vector<float>(width * height, 0.0f)};
}

std::size_t PixelPseudoLabel::coverage(int category) const {
  std::size_t n = 0;
  for (CategoryId c : codes) n += c == category ? 1 : 0;
  return n;
}

PixelPseudoLabel pixel_pseudo_label(const FusedPrediction& previous, CategorySet old, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("pseudo-label threshold must lie in (0, 1)");
  const std::size_t w = previous.decision.width();
  const std::size_t h = previous.decision.height();
  const std::size_t plane = w * h;
  PixelPseudoLabel out = PixelPseudoLabel::none(w, h);
  for (std::size_t p = 0; p < plane; ++p) {
    const CategoryId c = previous.decision[p];
    if (!old.contains(c)) continue;
    const float score = previous.scores[previous.channel_of(c) * plane + p];
    if (score > tau) {
      out.codes[p] = c;
      out.confidence[p] = score;
    }
  }
  return out;
}

PixelPseudoLabel pixel_pseudo_label(const IncrementalModel* previous, const SceneImage& image, double tau,
                                    const InferenceOptions& options) {
  if (previous == nullptr) return PixelPseudoLabel::none(image.width, image.height);
  const SceneImage* batch[] = {&image};
  return pixel_pseudo_label(predict(*previous, batch, options).front(), previous->seen_categories(), tau);
}

namespace {

void check_inputs(const GroundTruthMap& y, const SaliencyMap& saliency, const char* what) {
  require_same_dims(y, saliency, what);
  for (std::uint8_t code : y.values()) {
    if (codes::is_sentinel(code) || code > kMaxCategories) {
      throw std::invalid_argument(std::string(what) + ": label code " + std::to_string(code) +
                                  " is not a raw dataset category");
    }
  }
}

}  // namespace

LabelMap reassign_permanent(const GroundTruthMap& y, CategorySet current, const PixelPseudoLabel& pseudo,
                            const SaliencyMap& saliency) {
  check_inputs(y, saliency, "reassign_permanent");
  if (pseudo.width != y.width() || pseudo.height != y.height()) {
    throw std::invalid_argument("reassign_permanent: pseudo label size differs from label map");
  }
  LabelMap out(y.width(), y.height());
  for (std::size_t p = 0; p < y.size(); ++p) {
    const bool target = current.contains(y[p]);
    const bool background = y[p] == codes::kBackground;
    const bool old = pseudo.codes[p] != 0;
    if (target || (background && old)) {
      out[p] = codes::kIgnore;
    } else if (background && !old && saliency[p] == 1) {
      out[p] = codes::kUnknownForeground;
    } else {
      out[p] = codes::kBackground;
    }
  }
  return out;
}

LabelMap reassign_temporary(const GroundTruthMap& y, CategorySet current, const SaliencyMap& saliency) {
  check_inputs(y, saliency, "reassign_temporary");
  LabelMap out(y.width(), y.height());
  for (std::size_t p = 0; p < y.size(); ++p) {
    if (current.contains(y[p])) {
      out[p] = y[p];
    } else if (y[p] == codes::kBackground && saliency[p] == 1) {
      out[p] = codes::kOtherForeground;
    } else {
      out[p] = codes::kBackground;
    }
  }
  return out;
}

CategorySet image_pseudo_label(CategorySet annotated, const PixelPseudoLabel* pseudo, CategorySet old, double rho) {
  if (!(rho > 0.0 && rho <= 0.05)) throw std::invalid_argument("image pseudo-label coverage must lie in (0, 0.05]");
  CategorySet out = annotated;
  if (pseudo == nullptr) return out;
  const double needed = rho * static_cast<double>(pseudo->width * pseudo->height);
  for (CategoryId c : old.members()) {
    if (static_cast<double>(pseudo->coverage(c)) >= needed) out.insert(c);
  }
  return out;
}

}  // namespace ipseg
