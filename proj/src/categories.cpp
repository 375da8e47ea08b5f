#include "ipseg/categories.hpp"

#include <bit>
#include <charconv>
#include <stdexcept>

namespace ipseg {

CategorySet::CategorySet(std::initializer_list<int> members) {
  for (int c : members) insert(c);
}

CategorySet CategorySet::range(int first, int last) {
  CategorySet s;
  for (int c = first; c <= last; ++c) s.insert(c);
  return s;
}

CategorySet CategorySet::parse(std::string_view text) {
  CategorySet s;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view token = text.substr(0, comma);
    int value = 0;
    const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || end != token.data() + token.size()) {
      throw std::invalid_argument("bad category list entry '" + std::string(token) + "'");
    }
    s.insert(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return s;
}

void CategorySet::insert(int category) {
  if (category < 1 || category > kMaxCategories) {
    throw std::out_of_range("category code " + std::to_string(category) + " outside 1.." +
                            std::to_string(kMaxCategories));
  }
  bits_ |= 1u << category;
}

void CategorySet::erase(int category) {
  if (category >= 1 && category <= kMaxCategories) bits_ &= ~(1u << category);
}

std::size_t CategorySet::size() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<CategoryId> CategorySet::members() const {
  std::vector<CategoryId> out;
  for (int c = 1; c <= kMaxCategories; ++c) {
    if (contains(c)) out.push_back(static_cast<CategoryId>(c));
  }
  return out;
}

int CategorySet::max() const noexcept { return bits_ == 0 ? 0 : 31 - std::countl_zero(bits_); }

std::string CategorySet::to_string() const {
  std::string out;
  for (CategoryId c : members()) {
    if (!out.empty()) out += ',';
    out += std::to_string(c);
  }
  return out;
}

}  // namespace ipseg
