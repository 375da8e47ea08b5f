#include "ipseg/shapes_world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "ipseg/hash.hpp"
#include "ipseg/rng.hpp"

namespace ipseg {
namespace {

constexpr std::array<CategorySpec, kMaxCategories> kCatalog{{
    {1, ShapeKind::disc, 0.0, "red disc"},
    {2, ShapeKind::square, 120.0, "green square"},
    {3, ShapeKind::triangle, 225.0, "blue triangle"},
    {4, ShapeKind::diamond, 58.0, "yellow diamond"},
    {5, ShapeKind::disc, 28.0, "orange disc"},
    {6, ShapeKind::cross, 185.0, "cyan cross"},
    {7, ShapeKind::ring, 305.0, "magenta ring"},
    {8, ShapeKind::square, 270.0, "violet square"},
    {9, ShapeKind::triangle, 90.0, "lime triangle"},
    {10, ShapeKind::diamond, 160.0, "teal diamond"},
    {11, ShapeKind::cross, 335.0, "pink cross"},
    {12, ShapeKind::ring, 205.0, "azure ring"},
}};

constexpr double kHueJitter = 5.0;

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double hue, double sat, double val) {
  hue = std::fmod(hue, 360.0);
  if (hue < 0) hue += 360.0;
  const double c = val * sat;
  const double hp = hue / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb out{0, 0, 0};
  switch (static_cast<int>(hp)) {
    case 0: out = {c, x, 0}; break;
    case 1: out = {x, c, 0}; break;
    case 2: out = {0, c, x}; break;
    case 3: out = {0, x, c}; break;
    case 4: out = {x, 0, c}; break;
    default: out = {c, 0, x}; break;
  }
  const double m = val - c;
  return {out.r + m, out.g + m, out.b + m};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); }

struct Object {
  CategoryId category;
  ShapeKind shape;
  double cx, cy, radius;
  Rgb color;
};

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

bool covers(const Object& o, double px, double py) {
  const double dx = px - o.cx;
  const double dy = py - o.cy;
  const double r = o.radius;
  switch (o.shape) {
    case ShapeKind::disc: return dx * dx + dy * dy <= r * r;
    case ShapeKind::square: return std::max(std::abs(dx), std::abs(dy)) <= 0.8 * r;
    case ShapeKind::diamond: return std::abs(dx) + std::abs(dy) <= r;
    case ShapeKind::ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.25 * r * r;
    }
    case ShapeKind::cross:
      return (std::abs(dx) <= 0.3 * r && std::abs(dy) <= r) || (std::abs(dy) <= 0.3 * r && std::abs(dx) <= r);
    case ShapeKind::triangle: {
      const double e0 = edge(0, -r, 0.95 * r, 0.75 * r, dx, dy);
      const double e1 = edge(0.95 * r, 0.75 * r, -0.95 * r, 0.75 * r, dx, dy);
      const double e2 = edge(-0.95 * r, 0.75 * r, 0, -r, dx, dy);
      return e0 >= 0 && e1 >= 0 && e2 >= 0;
    }
  }
  return false;
}

void validate(const GeneratorConfig& config) {
  if (config.num_categories < 4 || config.num_categories > kMaxCategories) {
    throw std::invalid_argument("num_categories must be in [4, 12], got " + std::to_string(config.num_categories));
  }
  if (config.width < 16 || config.height < 16) {
    throw std::invalid_argument("images must be at least 16x16");
  }
  if (config.max_objects < 1) throw std::invalid_argument("max_objects must be positive");
}

}  // namespace

std::span<const CategorySpec> category_catalog() { return kCatalog; }

ConfusablePair confusable_pair() { return {1, 5}; }

std::string sample_id(std::string_view prefix, std::size_t ordinal) {
  char digits[16];
  std::snprintf(digits, sizeof(digits), "%06zu", ordinal);
  return std::string(prefix) + "-" + digits;
}

Sample render_sample(const GeneratorConfig& config, std::size_t ordinal) {
  validate(config);
  const std::size_t w = config.width;
  const std::size_t h = config.height;
  const double scale = static_cast<double>(std::min(w, h)) / 64.0;
  const auto k = static_cast<std::uint64_t>(config.num_categories);

  Sample sample;
  sample.image.id = sample_id(config.id_prefix, ordinal);
  sample.image.width = w;
  sample.image.height = h;
  sample.image.rgb.assign(w * h * 3, 0);
  sample.truth = GroundTruthMap(w, h);
  Rng rng(derive_seed(config.seed, sample.image.id));

  const double base_value = rng.uniform(0.22, 0.5);
  const double tint_hue = rng.uniform(0.0, 360.0);
  const double tint_sat = rng.uniform(0.0, 0.15);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double frequency = rng.uniform(0.08, 0.25) / scale;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const std::size_t count = 1 + rng.below(static_cast<std::uint64_t>(config.max_objects));
  std::vector<Object> objects(count);
  for (std::size_t i = 0; i < count; ++i) {
    const CategoryId category = (i + 1 == count) ? static_cast<CategoryId>(ordinal % k + 1)
                                                 : static_cast<CategoryId>(rng.below(k) + 1);
    const CategorySpec& spec = kCatalog[category - 1];
    Object& o = objects[i];
    o.category = category;
    o.shape = spec.shape;
    o.radius = rng.uniform(9.0, 16.0) * scale;
    o.cx = rng.uniform(0.5 * o.radius, static_cast<double>(w) - 0.5 * o.radius);
    o.cy = rng.uniform(0.5 * o.radius, static_cast<double>(h) - 0.5 * o.radius);
    o.color = hsv_to_rgb(spec.hue_degrees + rng.uniform(-kHueJitter, kHueJitter), rng.uniform(0.7, 1.0),
                         rng.uniform(0.75, 1.0));
  }

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const double grain = rng.uniform(-1.0, 1.0);
      const Object* top = nullptr;
      for (const Object& o : objects) {
        if (covers(o, px, py)) top = &o;
      }
      Rgb color;
      if (top) {
        const double shade = 1.0 + 0.04 * grain;
        color = {top->color.r * shade, top->color.g * shade, top->color.b * shade};
        sample.truth.at(x, y) = top->category;
      } else {
        const double stripes = 0.07 * std::sin(frequency * (px * std::cos(angle) + py * std::sin(angle)) + phase);
        color = hsv_to_rgb(tint_hue, tint_sat, std::clamp(base_value + stripes + 0.05 * grain, 0.0, 1.0));
      }
      std::uint8_t* dst = &sample.image.rgb[(y * w + x) * 3];
      dst[0] = to_byte(color.r);
      dst[1] = to_byte(color.g);
      dst[2] = to_byte(color.b);
    }
  }
  for (std::uint8_t code : sample.truth.values()) {
    if (code != codes::kBackground) sample.categories.insert(code);
  }
  return sample;
}

std::vector<Sample> generate_dataset(const GeneratorConfig& config) {
  validate(config);
  std::vector<Sample> samples;
  samples.reserve(config.sample_count);
  for (std::size_t i = 0; i < config.sample_count; ++i) samples.push_back(render_sample(config, i));
  return samples;
}

std::uint64_t corpus_digest(std::span<const Sample> samples) {
  Fnv1a hash;
  for (const Sample& s : samples) {
    hash.update(s.image.id);
    hash.update(s.image.rgb);
    hash.update(s.truth.values());
  }
  return hash.digest();
}

}  // namespace ipseg
