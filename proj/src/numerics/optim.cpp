#include "mcm/numerics/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "mcm/numerics/kernels.hpp"

namespace mcm {

void sgd_step(std::vector<Parameter>& params, double lr) {
  for (const auto& p : params) {
    if (p.trainable && !p.var.has_grad()) {
      throw std::logic_error("sgd_step: parameter '" + p.name +
                             "' has no gradient");
    }
  }
  for (auto& p : params) {
    if (!p.trainable) continue;
    Tensor& w = p.var.mutable_value();
    kernels::active().axpy(w.numel(), -lr, p.var.grad().ptr(), w.ptr());
    p.var.clear_grad();
  }
}

void MomentumSgd::step(std::vector<Parameter>& params, double lr) {
  if (momentum_ == 0.0) {
    sgd_step(params, lr);
    return;
  }
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.var.shape());
  }
  if (velocity_.size() != params.size()) {
    throw std::logic_error("MomentumSgd: parameter list changed between steps");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.trainable && !p.var.has_grad()) {
      throw std::logic_error("MomentumSgd: parameter '" + p.name + "' has no gradient");
    }
  }
  const auto& kt = kernels::active();
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    Tensor& v = velocity_[i];
    const double* g = p.var.grad().ptr();
    double* vp = v.ptr();
    for (int64_t j = 0; j < v.numel(); ++j) vp[j] = momentum_ * vp[j] + g[j];
    Tensor& w = p.var.mutable_value();
    kt.axpy(w.numel(), -lr, vp, w.ptr());
    p.var.clear_grad();
  }
}

double StepDecay::rate(int epoch) const {
  if (decay_every <= 0) return base_lr;
  return base_lr * std::pow(factor, epoch / decay_every);
}

}  // namespace mcm
