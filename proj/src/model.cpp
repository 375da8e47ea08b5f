#include "ipseg/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ipseg/hash.hpp"
#include "ipseg/nn/checkpoint.hpp"
#include "ipseg/nn/ops.hpp"
#include "ipseg/rng.hpp"

namespace ipseg {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

Tensor he_normal(nn::Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (float& v : t.values()) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

std::string head_name(std::size_t step) { return "head" + std::to_string(step); }

}  // namespace

IncrementalModel::Conv IncrementalModel::make_conv(const std::string& name, std::size_t in, std::size_t out,
                                                   std::size_t kernel) {
  const std::uint64_t seed = derive_seed(config_.seed, name);
  return {Parameter(name + ".weight", he_normal({out, in, kernel, kernel}, in * kernel * kernel, seed)),
          Parameter(name + ".bias", Tensor({out}))};
}

IncrementalModel::Linear IncrementalModel::make_linear(const std::string& name, std::size_t in, std::size_t out) {
  const std::uint64_t seed = derive_seed(config_.seed, name);
  return {Parameter(name + ".weight", he_normal({out, in}, in, seed)), Parameter(name + ".bias", Tensor({out}))};
}

IncrementalModel::Head IncrementalModel::make_head(const std::string& name, std::size_t out) {
  Head h;
  h.conv1 = make_conv(name + ".conv1", config_.feature_channels, config_.head_channels);
  h.conv2 = make_conv(name + ".conv2", config_.head_channels, config_.head_channels);
  h.conv3 = make_conv(name + ".conv3", config_.head_channels, out);
  return h;
}

IncrementalModel::IncrementalModel(const ModelConfig& config, CategorySet first_step) : config_(config) {
  if (first_step.empty()) throw std::invalid_argument("first step needs at least one category");
  if (config.posterior_layers == 0) throw std::invalid_argument("posterior trunk needs at least one layer");
  backbone_.push_back(make_conv("backbone.conv1", 3, config.stem_channels));
  backbone_.push_back(make_conv("backbone.conv2", config.stem_channels, config.feature_channels));
  backbone_.push_back(make_conv("backbone.conv3", config.feature_channels, config.feature_channels));
  backbone_.push_back(make_conv("backbone.conv4", config.feature_channels, config.feature_channels));
  permanent_ = make_head("permanent", 2);
  embed_ = make_conv("posterior.embed", config.feature_channels, config.posterior_hidden, 1);
  std::size_t in = config.posterior_hidden;
  for (std::size_t l = 0; l < config.posterior_layers; ++l) {
    trunk_.push_back(make_linear("posterior.fc" + std::to_string(l + 1), in, config.posterior_hidden));
    in = config.posterior_hidden;
  }
  grow_for_step(first_step);
}

void IncrementalModel::grow_for_step(CategorySet categories) {
  if (categories.empty()) throw std::invalid_argument("a step needs at least one category");
  if (categories.intersects(seen_categories())) {
    throw std::invalid_argument("step categories " + categories.to_string() + " overlap already learned " +
                                seen_categories().to_string());
  }
  if (!heads_.empty()) {
    freeze_backbone();
    for (Head& h : heads_) {
      for (Conv* c : {&h.conv1, &h.conv2, &h.conv3}) {
        c->weight.frozen = true;
        c->bias.frozen = true;
      }
    }
  }
  const std::size_t step = heads_.size() + 1;
  Head h = make_head(head_name(step), categories.size() + 2);
  h.layout.categories = categories;
  heads_.push_back(std::move(h));
  blocks_.push_back(
      make_linear("posterior.block" + std::to_string(step), config_.posterior_hidden, categories.size()));
}

void IncrementalModel::freeze_backbone() {
  backbone_frozen_ = true;
  for (Conv& c : backbone_) {
    c.weight.frozen = true;
    c.bias.frozen = true;
  }
}

CategorySet IncrementalModel::seen_categories() const {
  CategorySet s;
  for (const Head& h : heads_) s = s | h.layout.categories;
  return s;
}

Tensor IncrementalModel::image_batch(std::span<const SceneImage* const> images) {
  if (images.empty()) throw std::invalid_argument("image_batch: no images");
  const std::size_t w = images[0]->width;
  const std::size_t h = images[0]->height;
  Tensor t({images.size(), 3, h, w});
  const std::size_t plane = w * h;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const SceneImage& img = *images[n];
    if (img.width != w || img.height != h) {
      throw std::invalid_argument("image_batch: " + img.id + " is " + std::to_string(img.width) + "x" +
                                  std::to_string(img.height) + ", batch is " + std::to_string(w) + "x" +
                                  std::to_string(h));
    }
    float* dst = t.data() + n * 3 * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) dst[c * plane + p] = img.rgb[p * 3 + c] / 255.0f - 0.5f;
    }
  }
  return t;
}

template <class Self>
Var IncrementalModel::features_impl(Self& self, Tape& tape, Var images) {
  const nn::Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] % 4 != 0 || s[3] % 4 != 0) {
    throw std::invalid_argument("model input must be N x 3 x H x W with H, W divisible by 4, got " +
                                nn::to_string(s));
  }
  Var x = images;
  const std::size_t strides[] = {2, 2, 1, 1};
  for (std::size_t l = 0; l < self.backbone_.size(); ++l) {
    auto& c = self.backbone_[l];
    x = nn::relu(nn::conv2d(x, tape.parameter(c.weight), tape.parameter(c.bias), strides[l], 1));
  }
  return x;
}

template <class HeadT>
Var IncrementalModel::head_forward(HeadT& head, Tape& tape, Var features) {
  Var x = nn::relu(nn::conv2d(features, tape.parameter(head.conv1.weight), tape.parameter(head.conv1.bias), 1, 1));
  x = nn::upsample_nearest(x, 2);
  x = nn::relu(nn::conv2d(x, tape.parameter(head.conv2.weight), tape.parameter(head.conv2.bias), 1, 1));
  x = nn::conv2d(x, tape.parameter(head.conv3.weight), tape.parameter(head.conv3.bias), 1, 1);
  return nn::upsample_nearest(x, 2);
}

void IncrementalModel::check_features(const Var& features) const {
  const nn::Shape& s = features.shape();
  if (s.size() != 4 || s[1] != config_.feature_channels) {
    throw std::invalid_argument("head input " + nn::to_string(s) + " does not have " +
                                std::to_string(config_.feature_channels) + " feature channels");
  }
}

template <class Self>
PixelLogits IncrementalModel::forward_pixel_impl(Self& self, Tape& tape, Var features) {
  self.check_features(features);
  PixelLogits out;
  out.permanent = head_forward(self.permanent_, tape, features);
  for (auto& h : self.heads_) out.heads.push_back(head_forward(h, tape, features));
  return out;
}

template <class Self>
Var IncrementalModel::forward_posterior_impl(Self& self, Tape& tape, Var features) {
  // The branch reads the features through a stop-gradient: its image-level
  // loss never reaches the backbone, which is shaped by the pixel heads only.
  const Var input = features.requires_grad() ? tape.constant(features.value()) : features;
  // Pixelwise embedding, then the strongest response per unit, so a small
  // object is not diluted by the surrounding background.
  Var x = nn::relu(nn::conv2d(input, tape.parameter(self.embed_.weight), tape.parameter(self.embed_.bias), 1, 0));
  x = nn::global_max_pool(x);
  for (auto& l : self.trunk_) x = nn::relu(nn::fully_connected(x, tape.parameter(l.weight), tape.parameter(l.bias)));
  std::vector<Var> parts;
  for (auto& b : self.blocks_) parts.push_back(nn::fully_connected(x, tape.parameter(b.weight), tape.parameter(b.bias)));
  return parts.size() == 1 ? parts[0] : nn::concat_channels(parts);
}

Var IncrementalModel::features(Tape& tape, Var images) { return features_impl(*this, tape, images); }
Var IncrementalModel::features(Tape& tape, Var images) const { return features_impl(*this, tape, images); }
PixelLogits IncrementalModel::forward_pixel(Tape& tape, Var features) {
  return forward_pixel_impl(*this, tape, features);
}
PixelLogits IncrementalModel::forward_pixel(Tape& tape, Var features) const {
  return forward_pixel_impl(*this, tape, features);
}
Var IncrementalModel::forward_permanent(Tape& tape, Var features) {
  check_features(features);
  return head_forward(permanent_, tape, features);
}
Var IncrementalModel::forward_permanent(Tape& tape, Var features) const {
  check_features(features);
  return head_forward(permanent_, tape, features);
}
Var IncrementalModel::forward_head(Tape& tape, Var features, std::size_t step) {
  check_features(features);
  return head_forward(heads_.at(step - 1), tape, features);
}
Var IncrementalModel::forward_head(Tape& tape, Var features, std::size_t step) const {
  check_features(features);
  return head_forward(heads_.at(step - 1), tape, features);
}
Var IncrementalModel::forward_posterior(Tape& tape, Var features) {
  return forward_posterior_impl(*this, tape, features);
}
Var IncrementalModel::forward_posterior(Tape& tape, Var features) const {
  return forward_posterior_impl(*this, tape, features);
}

std::vector<Parameter*> IncrementalModel::parameters() {
  std::vector<Parameter*> out;
  auto conv = [&](Conv& c) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  };
  auto head = [&](Head& h) {
    conv(h.conv1);
    conv(h.conv2);
    conv(h.conv3);
  };
  for (Conv& c : backbone_) conv(c);
  head(permanent_);
  for (Head& h : heads_) head(h);
  conv(embed_);
  for (Linear& l : trunk_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (Linear& l : blocks_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> IncrementalModel::parameters() const {
  auto mutable_params = const_cast<IncrementalModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t IncrementalModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::uint64_t IncrementalModel::group_digest(const std::string& group) const {
  Fnv1a h;
  bool any = false;
  for (const Parameter* p : parameters()) {
    if (p->name.compare(0, group.size() + 1, group + ".") != 0) continue;
    any = true;
    h.update(p->name);
    h.update(p->value.data(), p->value.size() * sizeof(float));
  }
  if (!any) throw std::invalid_argument("no parameter group named " + group);
  return h.digest();
}

std::string IncrementalModel::manifest() const {
  std::ostringstream out;
  out << "ipseg-model 1\n";
  out << "stem_channels " << config_.stem_channels << '\n';
  out << "feature_channels " << config_.feature_channels << '\n';
  out << "head_channels " << config_.head_channels << '\n';
  out << "posterior_hidden " << config_.posterior_hidden << '\n';
  out << "posterior_layers " << config_.posterior_layers << '\n';
  out << "seed " << config_.seed << '\n';
  out << "backbone_frozen " << (backbone_frozen_ ? 1 : 0) << '\n';
  for (std::size_t t = 1; t <= heads_.size(); ++t) {
    const HeadLayout& layout = heads_[t - 1].layout;
    out << "step " << t << ' ' << layout.categories.to_string() << " channels=";
    for (CategoryId c : layout.categories.members()) out << static_cast<int>(c) << ',';
    out << "other_foreground,background\n";
  }
  return out.str();
}

void IncrementalModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream bin(path, std::ios::binary);
  const auto params = parameters();
  nn::write_checkpoint(bin, params);
  if (!bin) throw std::runtime_error("cannot write checkpoint " + path.string());
  std::ofstream text(path.string() + ".manifest");
  text << manifest();
  if (!text) throw std::runtime_error("cannot write model manifest for " + path.string());
}

IncrementalModel IncrementalModel::load(const std::filesystem::path& path) {
  std::ifstream text(path.string() + ".manifest");
  if (!text) throw std::runtime_error("cannot open model manifest for " + path.string());
  std::string line;
  std::getline(text, line);
  if (line != "ipseg-model 1") throw std::runtime_error("unrecognised model manifest header: " + line);
  ModelConfig config;
  bool frozen = false;
  std::vector<CategorySet> steps;
  while (std::getline(text, line)) {
    std::istringstream in(line);
    std::string key;
    in >> key;
    if (key == "stem_channels") in >> config.stem_channels;
    else if (key == "feature_channels") in >> config.feature_channels;
    else if (key == "head_channels") in >> config.head_channels;
    else if (key == "posterior_hidden") in >> config.posterior_hidden;
    else if (key == "posterior_layers") in >> config.posterior_layers;
    else if (key == "seed") in >> config.seed;
    else if (key == "backbone_frozen") in >> frozen;
    else if (key == "step") {
      std::size_t t = 0;
      std::string cats;
      in >> t >> cats;
      if (t != steps.size() + 1) throw std::runtime_error("model manifest steps out of order at step " + std::to_string(t));
      steps.push_back(CategorySet::parse(cats));
    } else if (!key.empty()) {
      throw std::runtime_error("unknown model manifest key " + key);
    }
    if (in.fail()) throw std::runtime_error("malformed model manifest line: " + line);
  }
  if (steps.empty()) throw std::runtime_error("model manifest lists no steps");
  IncrementalModel model(config, steps[0]);
  for (std::size_t t = 1; t < steps.size(); ++t) model.grow_for_step(steps[t]);
  if (frozen) model.freeze_backbone();
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint " + path.string());
  const auto params = model.parameters();
  nn::load_checkpoint(params, nn::read_checkpoint(bin));
  return model;
}

}  // namespace ipseg
