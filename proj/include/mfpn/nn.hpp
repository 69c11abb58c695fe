#pragma once

#include <string>
#include <vector>

#include "mfpn/rng.hpp"
#include "mfpn/tape.hpp"
#include "mfpn/tensor.hpp"

namespace mfpn {

// Named parameter reference, used for optimizer wiring and checkpoints.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct Linear {
  Tensor w;  // {out, in}
  Tensor b;  // {out}
};

struct Conv {
  Tensor w;  // {out, in, 3, 3}
  Tensor b;  // {out}
};

// uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out))
Tensor glorot(Shape shape, size_t fan_in, size_t fan_out, Rng& rng);

Linear make_linear(size_t in, size_t out, Rng& rng);
Conv make_conv(size_t in, size_t out, Rng& rng);

// Binds model parameters onto a tape once each, so the same bound tensor is
// reused across the forward pass and gradients can be read back per param.
class Binder {
 public:
  Binder(Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  Tensor operator()(const Tensor& param) { return bind(param, trainable_); }
  Tensor frozen(const Tensor& param) { return bind(param, false); }

  // gradient for a previously bound param; zeros when none was produced
  Tensor grad_of(const Tensor& param) const;

 private:
  Tensor bind(const Tensor& param, bool trainable);
  Tape& tape_;
  bool trainable_;
  std::vector<std::pair<const Tensor*, Tensor>> bound_;
};

Tensor linear_fwd(Tape& t, Binder& bind, const Linear& l, const Tensor& x);
Tensor conv_fwd(Tape& t, Binder& bind, const Conv& c, const Tensor& x, int stride);

// nearest-neighbour 2x upsample of {C,H,W}, built from concat + reshape
Tensor upsample2x(Tape& t, const Tensor& x);

// image tensor {C,H,W} average-pooled 2x (stride-2 averaging kernel per channel)
Tensor downsample2x_values(const Tensor& x);

}  // namespace mfpn
