#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ipseg/categories.hpp"
#include "ipseg/image.hpp"
#include "ipseg/nn/autodiff.hpp"

namespace ipseg {

struct ModelConfig {
  std::size_t stem_channels = 16;
  std::size_t feature_channels = 32;
  std::size_t head_channels = 16;
  std::size_t posterior_hidden = 32;
  std::size_t posterior_layers = 1;
  std::uint64_t seed = 7;
};

/// Channel order of a temporary head: its categories ascending, then these two.
struct HeadLayout {
  CategorySet categories;
  std::size_t other_foreground_channel() const { return categories.size(); }
  std::size_t background_channel() const { return categories.size() + 1; }
  std::size_t channels() const { return categories.size() + 2; }
};

/// Channel order of the permanent head.
inline constexpr std::size_t kPermanentBackground = 0;
inline constexpr std::size_t kPermanentUnknown = 1;

struct PixelLogits {
  nn::Var permanent;           // N x 2 x H x W
  std::vector<nn::Var> heads;  // head t: N x (|C_t| + 2) x H x W
};

/// Backbone, permanent head, one temporary head per step and the image
/// posterior branch. Spatial size is fixed by the backbone's two stride-2
/// layers: inputs must have sides divisible by 4.
class IncrementalModel {
 public:
  IncrementalModel(const ModelConfig& config, CategorySet first_step);

  IncrementalModel(const IncrementalModel&) = delete;
  IncrementalModel& operator=(const IncrementalModel&) = delete;
  IncrementalModel(IncrementalModel&&) = default;
  IncrementalModel& operator=(IncrementalModel&&) = default;

  /// Appends head t+1 and its posterior block; freezes the backbone and every
  /// existing temporary head. Throws std::invalid_argument if `categories`
  /// overlaps an existing step.
  void grow_for_step(CategorySet categories);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t step_count() const noexcept { return heads_.size(); }
  const HeadLayout& head_layout(std::size_t step) const { return heads_.at(step - 1).layout; }
  CategorySet seen_categories() const;
  /// Posterior output k corresponds to seen_categories().members()[k].
  std::size_t posterior_size() const { return seen_categories().size(); }

  /// N x 3 x H x W, channels scaled to [-0.5, 0.5].
  static nn::Tensor image_batch(std::span<const SceneImage* const> images);

  nn::Var features(nn::Tape& tape, nn::Var images);
  nn::Var features(nn::Tape& tape, nn::Var images) const;
  PixelLogits forward_pixel(nn::Tape& tape, nn::Var features);
  PixelLogits forward_pixel(nn::Tape& tape, nn::Var features) const;
  /// Permanent head alone, N x 2 x H x W.
  nn::Var forward_permanent(nn::Tape& tape, nn::Var features);
  nn::Var forward_permanent(nn::Tape& tape, nn::Var features) const;
  /// Temporary head of `step` alone, N x (|C_t| + 2) x H x W.
  nn::Var forward_head(nn::Tape& tape, nn::Var features, std::size_t step);
  nn::Var forward_head(nn::Tape& tape, nn::Var features, std::size_t step) const;
  /// Logits over seen categories, N x |C_{1:t}|.
  nn::Var forward_posterior(nn::Tape& tape, nn::Var features);
  nn::Var forward_posterior(nn::Tape& tape, nn::Var features) const;

  /// Every parameter, in a stable order (backbone, permanent, heads, posterior).
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;
  bool backbone_frozen() const noexcept { return backbone_frozen_; }
  /// Freezes the backbone without adding a step (end of step-1 training).
  void freeze_backbone();

  /// FNV-1a over names and value bytes of the named parameter group
  /// ("backbone", "permanent", "head<t>", "posterior").
  std::uint64_t group_digest(const std::string& group) const;

  /// Binary checkpoint at `path`, head manifest at `path` + ".manifest".
  void save(const std::filesystem::path& path) const;
  static IncrementalModel load(const std::filesystem::path& path);
  std::string manifest() const;

 private:
  struct Conv {
    nn::Parameter weight;
    nn::Parameter bias;
  };
  struct Head {
    HeadLayout layout;
    Conv conv1, conv2, conv3;
  };
  struct Linear {
    nn::Parameter weight;
    nn::Parameter bias;
  };

  template <class Self>
  static nn::Var features_impl(Self& self, nn::Tape& tape, nn::Var images);
  template <class Self>
  static PixelLogits forward_pixel_impl(Self& self, nn::Tape& tape, nn::Var features);
  template <class Self>
  static nn::Var forward_posterior_impl(Self& self, nn::Tape& tape, nn::Var features);
  template <class HeadT>
  static nn::Var head_forward(HeadT& head, nn::Tape& tape, nn::Var features);
  void check_features(const nn::Var& features) const;

  Conv make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel = 3);
  Head make_head(const std::string& name, std::size_t out);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out);

  ModelConfig config_;
  bool backbone_frozen_ = false;
  std::vector<Conv> backbone_;
  Head permanent_;
  std::vector<Head> heads_;
  Conv embed_;
  std::vector<Linear> trunk_;
  std::vector<Linear> blocks_;
};

}  // namespace ipseg
