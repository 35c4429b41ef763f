#pragma once

#include <string>

#include "naslab/tensor.hpp"

namespace naslab {

/// Learnable parameter. `grad` is accumulated by Tape::backward and zeroed
/// between optimizer steps by the owner.
struct Param {
  Tensor value;
  Tensor grad;
  std::string tag;

  Param() = default;
  Param(Tensor v, std::string t)
      : value(std::move(v)), grad(Tensor::zeros(value.shape)), tag(std::move(t)) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

}  // namespace naslab
