#include "mfpn/optim.hpp"

#include "mfpn/common.hpp"

namespace mfpn {

void SgdOptimizer::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size())
    fail("sgd_step: " + std::to_string(params.size()) + " params vs " +
         std::to_string(grads.size()) + " grads");
  if (velocity_.empty()) {
    for (const Tensor* p : params) velocity_.emplace_back(p->shape());
  }
  if (velocity_.size() != params.size()) fail("sgd_step: param set changed between steps");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g))
      fail("sgd_step: param shape " + shape_str(p.shape()) + " != grad shape " +
           shape_str(g.shape()));
    double* v = velocity_[i].mutable_data();
    double* pd = p.mutable_data();
    const double* gd = g.data();
    for (size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum_ * v[j] + gd[j];
      pd[j] -= lr_ * v[j];
    }
  }
}

}  // namespace mfpn
