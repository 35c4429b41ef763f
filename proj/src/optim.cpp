#include "naslab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace naslab {

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (step > total_steps) throw std::invalid_argument("cosine_lr: step > total_steps");
  return lr0 * (1.0 + std::cos(std::numbers::pi * double(step) / double(total_steps))) / 2.0;
}

void Optimizer::step(const std::vector<Param*>& params, double lr, double weight_decay) {
  if (kind_ == OptKind::Adam) ++t_;
  for (Param* p : params) {
    if (p->grad.numel() != p->value.numel())
      throw shape_error("optimizer: grad/value shape mismatch for " + p->tag);
    if (kind_ == OptKind::SgdMomentum) {
      auto [it, inserted] = buf_.try_emplace(p, Tensor::zeros(p->value.shape));
      Tensor& buf = it->second;
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        double g = p->grad.data[i] + weight_decay * p->value.data[i];
        buf.data[i] = momentum_ * buf.data[i] + g;
        p->value.data[i] -= lr * buf.data[i];
      }
    } else {
      auto [mit, mi] = m_.try_emplace(p, Tensor::zeros(p->value.shape));
      auto [vit, vi] = v_.try_emplace(p, Tensor::zeros(p->value.shape));
      double bc1 = 1.0 - std::pow(beta1_, double(t_));
      double bc2 = 1.0 - std::pow(beta2_, double(t_));
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        double g = p->grad.data[i] + weight_decay * p->value.data[i];
        mit->second.data[i] = beta1_ * mit->second.data[i] + (1.0 - beta1_) * g;
        vit->second.data[i] = beta2_ * vit->second.data[i] + (1.0 - beta2_) * g * g;
        double mhat = mit->second.data[i] / bc1;
        double vhat = vit->second.data[i] / bc2;
        p->value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }
}

}  // namespace naslab
