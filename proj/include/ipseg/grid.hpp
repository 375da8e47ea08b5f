#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipseg {

/// Row-major byte plane. The tag keeps ground truth, reassigned labels,
/// saliency bits and decisions from being mixed up.
template <class Tag>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t width, std::size_t height, std::uint8_t fill = 0)
      : width_(width), height_(height), values_(width * height, fill) {}
  Grid(std::size_t width, std::size_t height, std::vector<std::uint8_t> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (values_.size() != width * height) {
      throw std::invalid_argument("grid " + std::to_string(width) + "x" + std::to_string(height) + " given " +
                                  std::to_string(values_.size()) + " values");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::uint8_t operator[](std::size_t i) const { return values_[i]; }
  std::uint8_t& operator[](std::size_t i) { return values_[i]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return values_[y * width_ + x]; }

  std::span<const std::uint8_t> values() const noexcept { return values_; }
  std::span<std::uint8_t> values() noexcept { return values_; }

  template <class Other>
  bool same_dims(const Grid<Other>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Raw dataset annotation: 0 background, 1..K categories.
using GroundTruthMap = Grid<struct GroundTruthTag>;
/// Reassigned training labels; may contain the sentinel codes below.
using LabelMap = Grid<struct LabelMapTag>;
/// Binary salient-object map.
using SaliencyMap = Grid<struct SaliencyTag>;
/// Per-pixel predicted category (0 = background).
using DecisionMap = Grid<struct DecisionTag>;

namespace codes {
inline constexpr std::uint8_t kBackground = 0;          // c'_b, and c_b in raw annotation
inline constexpr std::uint8_t kOtherForeground = 253;   // c_f
inline constexpr std::uint8_t kUnknownForeground = 254; // c'_u
inline constexpr std::uint8_t kIgnore = 255;            // c_i

constexpr bool is_sentinel(std::uint8_t code) { return code >= kOtherForeground; }
}  // namespace codes

template <class A, class B>
void require_same_dims(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_dims(b)) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(a.width()) + "x" +
                                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                                std::to_string(b.height()));
  }
}

}  // namespace ipseg
