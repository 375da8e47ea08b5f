#include "ipseg/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace ipseg::nn {
namespace {

constexpr std::array<char, 4> kMagic{'I', 'P', 'S', 'G'};

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <class T>
bool get_le(std::istream& in, T& value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return true;
}

[[noreturn]] void truncated(const std::string& what) {
  throw std::runtime_error("checkpoint truncated while reading " + what);
}

}  // namespace

void write_checkpoint(std::ostream& out, std::span<const Parameter* const> params) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const Parameter* p : params) {
    if (p->name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("parameter name too long: " + p->name.substr(0, 32));
    }
    if (p->value.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw std::invalid_argument("parameter rank too large: " + p->name);
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : p->value.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("not a checkpoint: bad magic");
  }
  std::uint32_t version = 0;
  if (!get_le(in, version)) truncated("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    std::uint16_t name_length = 0;
    if (!get_le(in, name_length)) truncated("name length");
    std::string name(name_length, '\0');
    if (!in.read(name.data(), name_length)) truncated("name");
    std::uint8_t rank = 0;
    if (!get_le(in, rank)) truncated("rank of " + name);
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint32_t dim = 0;
      if (!get_le(in, dim)) truncated("dims of " + name);
      d = dim;
    }
    Tensor value(shape);
    for (float& v : value.values()) {
      std::uint32_t bits = 0;
      if (!get_le(in, bits)) truncated("payload of " + name);
      v = std::bit_cast<float>(bits);
    }
    records.push_back({std::move(name), std::move(value)});
  }
  return records;
}

void load_checkpoint(std::span<Parameter* const> params, const std::vector<NamedTensor>& records) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r.value;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint lacks parameter " + p->name);
    if (it->second->shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint shape " + to_string(it->second->shape()) + " for " + p->name +
                               " does not match " + to_string(p->value.shape()));
    }
    p->value = *it->second;
  }
}

}  // namespace ipseg::nn
