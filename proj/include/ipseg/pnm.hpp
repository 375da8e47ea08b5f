#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipseg/image.hpp"

namespace ipseg {

/// Malformed or truncated PNM data; offset() is the byte where parsing failed.
class PnmError : public std::runtime_error {
 public:
  PnmError(const std::string& what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Single-channel 8-bit image (label maps use maxval 255, saliency maxval 1).
struct GrayImage {
  std::string id;
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 255;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Binary P6/P5 with exactly one comment line "# <id>" after the magic:
//   "P6\n# <id>\n<w> <h>\n255\n" followed by the payload.
std::vector<std::uint8_t> encode_ppm(const SceneImage& image);
SceneImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);

void write_ppm(const std::filesystem::path& path, const SceneImage& image);
SceneImage read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

template <class Tag>
GrayImage to_gray(const Grid<Tag>& grid, std::string id, unsigned maxval = 255) {
  return {std::move(id), grid.width(), grid.height(), maxval, {grid.values().begin(), grid.values().end()}};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ipseg
