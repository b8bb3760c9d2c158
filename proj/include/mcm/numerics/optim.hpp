#pragma once

#include <vector>

#include "mcm/numerics/autograd.hpp"

namespace mcm {

// p <- p - lr * grad(p) for every trainable parameter, then clears grads.
// Throws if a trainable parameter has no gradient.
void sgd_step(std::vector<Parameter>& params, double lr);

// Heavy-ball momentum: v <- mu * v + grad; p <- p - lr * v. Velocity
// buffers follow the parameter order of the first step. mu = 0 reduces to
// sgd_step exactly.
class MomentumSgd {
 public:
  explicit MomentumSgd(double momentum) : momentum_(momentum) {}

  void step(std::vector<Parameter>& params, double lr);
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

struct StepDecay {
  double base_lr = 0.001;
  int decay_every = 0;  // epochs; 0 disables decay
  double factor = 0.1;

  double rate(int epoch) const;
};

}  // namespace mcm
