#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ipseg/nn/parameter.hpp"

namespace ipseg::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Binary layout: "IPSG", u32 version, then per parameter: u16 name length,
/// name bytes, u8 rank, u32 per dimension, little-endian f32 payload.
/// Records run to end of stream.
void write_checkpoint(std::ostream& out, std::span<const Parameter* const> params);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

/// Copies values by name; every parameter must be present with its shape.
void load_checkpoint(std::span<Parameter* const> params, const std::vector<NamedTensor>& records);

}  // namespace ipseg::nn
