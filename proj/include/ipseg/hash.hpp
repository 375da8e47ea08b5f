#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ipseg {

/// Incremental FNV-1a (64-bit).
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::uint8_t> bytes) {
    for (std::uint8_t b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(const void* data, std::size_t length) {
    return update(std::span(static_cast<const std::uint8_t*>(data), length));
  }
  Fnv1a& update(std::string_view text) { return update(text.data(), text.size()); }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex_digest(std::uint64_t digest);

}  // namespace ipseg
