#pragma once

#include <vector>

#include "mfpn/tensor.hpp"

namespace mfpn {

// SGD with classic momentum: v <- momentum * v + g, p <- p - lr * v.
// Velocity slots are keyed by position in the params vector, which must be
// stable across steps.
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
};

}  // namespace mfpn
