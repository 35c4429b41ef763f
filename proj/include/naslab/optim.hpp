#pragma once

#include <unordered_map>
#include <vector>

#include "naslab/param.hpp"

namespace naslab {

/// lr0 * (1 + cos(pi * step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

enum class OptKind { SgdMomentum, Adam };

/// SGD with momentum / Adam. Weight decay is added to the gradient
/// (coupled, not decoupled). Buffers are keyed by Param address.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptKind kind, double momentum = 0.9, double beta1 = 0.5,
                     double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), momentum_(momentum), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  static Optimizer sgd_momentum(double momentum = 0.9) {
    return Optimizer(OptKind::SgdMomentum, momentum);
  }
  static Optimizer adam(double beta1 = 0.5, double beta2 = 0.999) {
    return Optimizer(OptKind::Adam, 0.9, beta1, beta2);
  }

  void step(const std::vector<Param*>& params, double lr, double weight_decay);

  OptKind kind() const { return kind_; }

 private:
  OptKind kind_ = OptKind::SgdMomentum;
  double momentum_ = 0.9;
  double beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;  // Adam step count, shared across params in this state
  std::unordered_map<Param*, Tensor> buf_;  // SGD momentum
  std::unordered_map<Param*, Tensor> m_, v_;  // Adam moments
};

}  // namespace naslab
