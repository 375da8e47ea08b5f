#pragma once

// Independent evaluators shared by unit and acceptance tests.

#include <bit>
#include <cstdint>
#include <span>

#include "ipseg/memory.hpp"

namespace ipseg::oracle {

// Pixel-wise case analysis of the permanent-branch relabelling.
inline std::uint8_t expected_permanent(int y, bool in_current, bool pseudo_old, bool salient) {
  if (in_current) return 255;
  if (y == 0 && pseudo_old) return 255;
  if (y == 0 && !pseudo_old && salient) return 254;
  return 0;
}

// Pixel-wise case analysis of the temporary-branch relabelling.
inline std::uint8_t expected_temporary(int y, bool in_current, bool salient) {
  if (in_current) return static_cast<std::uint8_t>(y);
  if (y == 0 && salient) return 253;
  return 0;
}

// Exhaustive search over candidate subsets (at most 20 candidates): can at
// most `capacity` images give every seen category floor(capacity / |seen|)
// samples?
inline bool quota_feasible(std::span<const MemorySample> candidates, std::size_t capacity, CategorySet seen) {
  const std::size_t quota = capacity / seen.size();
  const std::size_t n = candidates.size();
  const auto members = seen.members();
  for (std::uint32_t subset = 0; subset < (1u << n); ++subset) {
    if (static_cast<std::size_t>(std::popcount(subset)) > capacity) continue;
    bool ok = true;
    for (auto c : members) {
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (((subset >> i) & 1u) && candidates[i].labels.contains(c)) ++count;
      if (count < quota) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  }
  return false;
}

}  // namespace ipseg::oracle
