#include "ipseg/hash.hpp"

#include <cstdio>

#include "ipseg/rng.hpp"

namespace ipseg {

std::string hex_digest(std::uint64_t digest) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(digest));
  return buffer;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  return derive_seed(base, Fnv1a().update(label).digest());
}

}  // namespace ipseg
