#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace ipseg {

using CategoryId = std::uint8_t;

/// Category codes 1..kMaxCategories; 0 is reserved for background.
inline constexpr int kMaxCategories = 12;

/// Small ordered set of foreground category codes.
class CategorySet {
 public:
  constexpr CategorySet() = default;
  CategorySet(std::initializer_list<int> members);

  /// {first, ..., last}; empty when last < first.
  static CategorySet range(int first, int last);
  /// Parses "1,3,4"; the empty string is the empty set.
  static CategorySet parse(std::string_view text);

  bool contains(int category) const noexcept {
    return category >= 1 && category <= kMaxCategories && ((bits_ >> category) & 1u);
  }
  void insert(int category);
  void erase(int category);

  std::size_t size() const noexcept;
  bool empty() const noexcept { return bits_ == 0; }
  /// Ascending.
  std::vector<CategoryId> members() const;
  int max() const noexcept;

  bool is_subset_of(CategorySet other) const noexcept { return (bits_ & ~other.bits_) == 0; }
  bool intersects(CategorySet other) const noexcept { return (bits_ & other.bits_) != 0; }

  friend CategorySet operator|(CategorySet a, CategorySet b) { return from_bits(a.bits_ | b.bits_); }
  friend CategorySet operator&(CategorySet a, CategorySet b) { return from_bits(a.bits_ & b.bits_); }
  friend CategorySet operator-(CategorySet a, CategorySet b) { return from_bits(a.bits_ & ~b.bits_); }
  friend bool operator==(CategorySet, CategorySet) = default;

  std::string to_string() const;
  std::uint32_t bits() const noexcept { return bits_; }

 private:
  static CategorySet from_bits(std::uint32_t bits) {
    CategorySet s;
    s.bits_ = bits;
    return s;
  }
  std::uint32_t bits_ = 0;
};

}  // namespace ipseg
