#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ipseg/categories.hpp"
#include "ipseg/grid.hpp"

namespace ipseg {

/// 8-bit RGB image, row-major, three bytes per pixel.
struct SceneImage {
  std::string id;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  friend bool operator==(const SceneImage&, const SceneImage&) = default;
};

/// An image with its pixel-exact annotation.
struct Sample {
  SceneImage image;
  GroundTruthMap truth;
  CategorySet categories;  // categories owning at least one pixel
};

}  // namespace ipseg
