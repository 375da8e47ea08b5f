#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ipseg/image.hpp"

namespace ipseg {

enum class ShapeKind { disc, square, triangle, diamond, ring, cross };

/// A category is a (shape, hue band) pair.
struct CategorySpec {
  CategoryId id;
  ShapeKind shape;
  double hue_degrees;
  std::string_view name;
};

/// Entry k-1 describes category k.
std::span<const CategorySpec> category_catalog();

/// Same shape, adjacent hue bands; `earlier` < `later` so they land in
/// different incremental steps for any M-N schedule with M < later.
struct ConfusablePair {
  CategoryId earlier;
  CategoryId later;
};
ConfusablePair confusable_pair();

struct GeneratorConfig {
  std::uint64_t seed = 42;
  int num_categories = 6;
  std::size_t sample_count = 300;
  std::size_t width = 64;
  std::size_t height = 64;
  std::string id_prefix = "train";
  int max_objects = 4;
};

std::string sample_id(std::string_view prefix, std::size_t ordinal);

/// Deterministic in (config.seed, sample id). Image `ordinal` always shows
/// category (ordinal mod K) + 1 on top, so every category appears in at
/// least floor(count / K) images.
Sample render_sample(const GeneratorConfig& config, std::size_t ordinal);

/// Throws std::invalid_argument unless 4 <= num_categories <= 12.
std::vector<Sample> generate_dataset(const GeneratorConfig& config);

/// Digest over ids, pixels and labels of a corpus.
std::uint64_t corpus_digest(std::span<const Sample> samples);

}  // namespace ipseg
