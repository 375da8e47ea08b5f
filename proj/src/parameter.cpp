#include "ipseg/nn/parameter.hpp"

namespace ipseg::nn {

Parameter::Parameter(std::string name_, Tensor initial)
    : name(std::move(name_)),
      value(std::move(initial)),
      gradient(value.shape()),
      momentum(value.shape()) {}

}  // namespace ipseg::nn
