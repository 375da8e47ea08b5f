#include <doctest.h>

#include "ipseg/rng.hpp"
#include "ipseg/saliency.hpp"
#include "ipseg/shapes_world.hpp"

using namespace ipseg;

namespace {

SaliencyMap foreground_union(const GroundTruthMap& truth) {
  SaliencyMap out(truth.width(), truth.height());
  for (std::size_t i = 0; i < truth.size(); ++i) out[i] = truth[i] != 0 ? 1 : 0;
  return out;
}

GroundTruthMap random_truth(std::uint64_t seed, std::size_t w, std::size_t h) {
  Rng rng(seed);
  GroundTruthMap truth(w, h);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = rng.bernoulli(0.3) ? 1 + rng.below(6) : 0;
  return truth;
}

}  // namespace

TEST_CASE("zero noise gives the exact foreground union") {
  GeneratorConfig config;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto sample = render_sample(config, i);
    CHECK(oracle_saliency(sample.truth, {}) == foreground_union(sample.truth));
  }
}

TEST_CASE("all-background image gives an all-zero map for any dilation") {
  const GroundTruthMap empty(64, 64);
  for (int radius = 0; radius <= 2; ++radius) {
    const auto map = oracle_saliency(empty, {0.0, radius, 9});
    for (auto v : map.values()) CHECK(v == 0);
  }
}

TEST_CASE("zero-noise map contains every single category mask") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto truth = random_truth(seed, 16, 16);
    for (int radius = 0; radius <= 2; ++radius) {
      const auto map = oracle_saliency(truth, {0.0, radius, seed});
      for (std::size_t i = 0; i < truth.size(); ++i)
        if (truth[i] != 0) CHECK(map[i] == 1);
    }
  }
}

TEST_CASE("dilation grows a point into a square") {
  SaliencyMap point(7, 7);
  point.at(3, 3) = 1;
  for (int radius = 0; radius <= 2; ++radius) {
    const auto grown = dilate(point, radius);
    for (std::size_t y = 0; y < 7; ++y)
      for (std::size_t x = 0; x < 7; ++x) {
        const bool inside = std::abs(int(x) - 3) <= radius && std::abs(int(y) - 3) <= radius;
        CHECK(grown.at(x, y) == (inside ? 1 : 0));
      }
  }
}

TEST_CASE("flip rate 0.1 flips 0.1 +- 0.02 of a 64x64 map over 50 seeds") {
  const auto truth = random_truth(5, 64, 64);
  const auto clean = foreground_union(truth);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto noisy = oracle_saliency(truth, {0.1, 0, seed});
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) flipped += noisy[i] != clean[i] ? 1 : 0;
    const double fraction = double(flipped) / double(clean.size());
    CHECK(std::abs(fraction - 0.1) <= 0.02);
  }
}

TEST_CASE("saliency is deterministic under a fixed seed") {
  const auto truth = random_truth(2, 32, 32);
  const SaliencyNoise noise{0.05, 1, 77};
  CHECK(oracle_saliency(truth, noise) == oracle_saliency(truth, noise));
  CHECK_FALSE(oracle_saliency(truth, noise) == oracle_saliency(truth, {0.05, 1, 78}));
}

TEST_CASE("out-of-range noise settings are rejected") {
  const GroundTruthMap truth(4, 4);
  CHECK_THROWS_AS(oracle_saliency(truth, {0.31, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(oracle_saliency(truth, {-0.01, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(oracle_saliency(truth, {0.0, 3, 0}), std::invalid_argument);
}
