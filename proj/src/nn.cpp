#include "mfpn/nn.hpp"

#include <cmath>

#include "mfpn/common.hpp"

namespace mfpn {

Tensor glorot(Shape shape, size_t fan_in, size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  double* d = t.mutable_data();
  for (size_t i = 0; i < t.size(); ++i) d[i] = rng.uniform(-s, s);
  return t;
}

Linear make_linear(size_t in, size_t out, Rng& rng) {
  return Linear{glorot({out, in}, in, out, rng), Tensor(Shape{out})};
}

Conv make_conv(size_t in, size_t out, Rng& rng) {
  return Conv{glorot({out, in, 3, 3}, in * 9, out * 9, rng), Tensor(Shape{out})};
}

Tensor Binder::bind(const Tensor& param, bool trainable) {
  for (const auto& [ptr, bound] : bound_)
    if (ptr == &param) return bound;
  Tensor b = tape_.leaf(param, trainable);
  bound_.emplace_back(&param, b);
  return b;
}

Tensor Binder::grad_of(const Tensor& param) const {
  for (const auto& [ptr, bound] : bound_) {
    if (ptr == &param) {
      if (tape_.has_grad(bound)) return tape_.grad(bound);
      return Tensor(param.shape());
    }
  }
  return Tensor(param.shape());
}

Tensor linear_fwd(Tape& t, Binder& bind, const Linear& l, const Tensor& x) {
  if (x.rank() == 1) {
    Tensor y = t.matmul(bind(l.w), x);
    return t.add(y, bind(l.b));
  }
  fail("linear_fwd: expected vector input, got " + shape_str(x.shape()));
}

Tensor conv_fwd(Tape& t, Binder& bind, const Conv& c, const Tensor& x, int stride) {
  Tensor y = t.conv3x3(x, bind(c.w), stride);
  return t.add(y, bind(c.b));
}

Tensor upsample2x(Tape& t, const Tensor& x) {
  const Shape& s = x.shape();
  check(s.size() == 3, "upsample2x: expected {C,H,W}");
  const size_t c = s[0], h = s[1], w = s[2];
  // duplicate columns: {C,H,W,1} -> {C,H,W,2} -> {C,H,2W}
  Tensor a = t.reshape(x, {c, h, w, 1});
  Tensor cols = t.reshape(t.concat({a, a}, 3), {c, h, 2 * w});
  // duplicate rows: {C,H,1,2W} -> {C,H,2,2W} -> {C,2H,2W}
  Tensor b = t.reshape(cols, {c, h, 1, 2 * w});
  return t.reshape(t.concat({b, b}, 2), {c, 2 * h, 2 * w});
}

Tensor downsample2x_values(const Tensor& x) {
  const Shape& s = x.shape();
  check(s.size() == 3 && s[1] % 2 == 0 && s[2] % 2 == 0, "downsample2x: bad shape");
  const size_t c = s[0], h = s[1], w = s[2];
  Tensor out(Shape{c, h / 2, w / 2});
  double* o = out.mutable_data();
  const double* p = x.data();
  for (size_t ci = 0; ci < c; ++ci)
    for (size_t y = 0; y < h / 2; ++y)
      for (size_t xx = 0; xx < w / 2; ++xx) {
        const double* base = p + ci * h * w + 2 * y * w + 2 * xx;
        o[ci * (h / 2) * (w / 2) + y * (w / 2) + xx] =
            0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
      }
  return out;
}

}  // namespace mfpn
