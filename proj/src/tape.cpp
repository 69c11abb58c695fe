#include "mfpn/tape.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#include "mfpn/common.hpp"

namespace mfpn {

namespace {

std::atomic<uint64_t> g_tape_counter{1};

void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// {outer, dims[axis], inner} factorization for axis-wise ops
void axis_split(const Shape& s, int axis, size_t* outer, size_t* mid, size_t* inner) {
  require(axis >= 0 && static_cast<size_t>(axis) < s.size(),
          "axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= s[i];
  *mid = s[axis];
  for (size_t i = axis + 1; i < s.size(); ++i) *inner *= s[i];
}

struct ConvDims {
  size_t cin, h, w, cout, ho, wo;
  int stride;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride) {
  require(xs.size() == 3, "conv3x3: input must be {C,H,W}, got " + shape_str(xs));
  require(ws.size() == 4 && ws[2] == 3 && ws[3] == 3,
          "conv3x3: kernel must be {Cout,Cin,3,3}, got " + shape_str(ws));
  require(ws[1] == xs[0], "conv3x3: kernel Cin " + std::to_string(ws[1]) +
                              " != input C " + std::to_string(xs[0]));
  require(stride == 1 || stride == 2, "conv3x3: stride must be 1 or 2");
  ConvDims d;
  d.cin = xs[0];
  d.h = xs[1];
  d.w = xs[2];
  d.cout = ws[0];
  d.stride = stride;
  d.ho = (d.h + stride - 1) / stride;
  d.wo = (d.w + stride - 1) / stride;
  return d;
}

void conv_forward(const double* x, const double* w, double* out, const ConvDims& d) {
  const int s = d.stride;
  for (size_t co = 0; co < d.cout; ++co) {
    double* op = out + co * d.ho * d.wo;
    for (size_t ci = 0; ci < d.cin; ++ci) {
      const double* xp = x + ci * d.h * d.w;
      const double* wp = w + (co * d.cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = wp[ky * 3 + kx];
          const int xo_lo = (kx == 0) ? 1 : 0;
          const int xo_hi = std::min<int>(d.wo - 1, (static_cast<int>(d.w) - kx) / s);
          for (size_t yo = 0; yo < d.ho; ++yo) {
            const int yi = static_cast<int>(yo) * s + ky - 1;
            if (yi < 0 || yi >= static_cast<int>(d.h)) continue;
            double* orow = op + yo * d.wo;
            const double* xrow = xp + yi * d.w + (kx - 1);
            if (s == 1) {
              for (int xo = xo_lo; xo <= xo_hi; ++xo) orow[xo] += wv * xrow[xo];
            } else {
              for (int xo = xo_lo; xo <= xo_hi; ++xo) orow[xo] += wv * xrow[2 * xo];
            }
          }
        }
      }
    }
  }
}

void conv_backward_input(const double* gout, const double* w, double* gin, const ConvDims& d) {
  const int s = d.stride;
  for (size_t co = 0; co < d.cout; ++co) {
    const double* gp = gout + co * d.ho * d.wo;
    for (size_t ci = 0; ci < d.cin; ++ci) {
      double* gip = gin + ci * d.h * d.w;
      const double* wp = w + (co * d.cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = wp[ky * 3 + kx];
          if (wv == 0.0) continue;
          const int xo_lo = (kx == 0) ? 1 : 0;
          const int xo_hi = std::min<int>(d.wo - 1, (static_cast<int>(d.w) - kx) / s);
          for (size_t yo = 0; yo < d.ho; ++yo) {
            const int yi = static_cast<int>(yo) * s + ky - 1;
            if (yi < 0 || yi >= static_cast<int>(d.h)) continue;
            const double* grow = gp + yo * d.wo;
            double* xrow = gip + yi * d.w + (kx - 1);
            if (s == 1) {
              for (int xo = xo_lo; xo <= xo_hi; ++xo) xrow[xo] += wv * grow[xo];
            } else {
              for (int xo = xo_lo; xo <= xo_hi; ++xo) xrow[2 * xo] += wv * grow[xo];
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const double* gout, const double* x, double* gw, const ConvDims& d) {
  const int s = d.stride;
  for (size_t co = 0; co < d.cout; ++co) {
    const double* gp = gout + co * d.ho * d.wo;
    for (size_t ci = 0; ci < d.cin; ++ci) {
      const double* xp = x + ci * d.h * d.w;
      double* wp = gw + (co * d.cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int xo_lo = (kx == 0) ? 1 : 0;
          const int xo_hi = std::min<int>(d.wo - 1, (static_cast<int>(d.w) - kx) / s);
          double acc = 0.0;
          for (size_t yo = 0; yo < d.ho; ++yo) {
            const int yi = static_cast<int>(yo) * s + ky - 1;
            if (yi < 0 || yi >= static_cast<int>(d.h)) continue;
            const double* grow = gp + yo * d.wo;
            const double* xrow = xp + yi * d.w + (kx - 1);
            if (s == 1) {
              for (int xo = xo_lo; xo <= xo_hi; ++xo) acc += grow[xo] * xrow[xo];
            } else {
              for (int xo = xo_lo; xo <= xo_hi; ++xo) acc += grow[xo] * xrow[2 * xo];
            }
          }
          wp[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

// add/mul broadcast classification
enum class Bcast { same, row_bias, channel_bias, scalar_rhs, scalar_lhs, invalid };

Bcast classify_bcast(const Shape& a, const Shape& b) {
  if (a == b) return Bcast::same;
  if (shape_numel(b) == 1 && b.size() == 0) return Bcast::scalar_rhs;
  if (shape_numel(a) == 1 && a.size() == 0) return Bcast::scalar_lhs;
  if (a.size() == 2 && b.size() == 1 && b[0] == a[1]) return Bcast::row_bias;
  if (a.size() == 3 && b.size() == 1 && b[0] == a[0]) return Bcast::channel_bias;
  return Bcast::invalid;
}

void softmax_xent_dims(const Shape& ls, const Shape& ts, size_t* n, size_t* k,
                       size_t* row_stride, size_t* class_stride) {
  if (ls.size() == 2 && ts.size() == 1 && ts[0] == ls[0]) {
    *n = ls[0];
    *k = ls[1];
    *row_stride = ls[1];
    *class_stride = 1;
  } else if (ls.size() == 3 && ts.size() == 2 && ts[0] == ls[1] && ts[1] == ls[2]) {
    *n = ls[1] * ls[2];
    *k = ls[0];
    *row_stride = 1;
    *class_stride = ls[1] * ls[2];
  } else {
    fail("softmax_xent: logits " + shape_str(ls) + " with targets " + shape_str(ts));
  }
}

Tensor forward_op(Op op, const std::vector<Tensor>& in, const OpAttrs& attrs, Tensor* saved) {
  switch (op) {
    case Op::leaf:
      fail("leaf is not applied");
    case Op::matmul: {
      require(in.size() == 2, "matmul: needs 2 inputs");
      const Shape& as = in[0].shape();
      const Shape& bs = in[1].shape();
      require(as.size() == 2, "matmul: lhs must be rank 2, got " + shape_str(as));
      const bool vec = bs.size() == 1;
      require(vec || bs.size() == 2, "matmul: rhs must be rank 1 or 2, got " + shape_str(bs));
      const size_t m = as[0], k = as[1];
      const size_t kb = vec ? bs[0] : bs[0];
      const size_t n = vec ? 1 : bs[1];
      require(k == kb, "matmul: inner dims differ, " + shape_str(as) + " x " + shape_str(bs));
      Tensor out(vec ? Shape{m} : Shape{m, n});
      const double* a = in[0].data();
      const double* b = in[1].data();
      double* c = out.mutable_data();
      for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t kk = 0; kk < k; ++kk) {
          const double av = arow[kk];
          const double* brow = b + kk * n;
          for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
      return out;
    }
    case Op::conv3x3: {
      require(in.size() == 2, "conv3x3: needs input and kernel");
      ConvDims d = conv_dims(in[0].shape(), in[1].shape(), attrs.stride);
      Tensor out(Shape{d.cout, d.ho, d.wo});
      conv_forward(in[0].data(), in[1].data(), out.mutable_data(), d);
      return out;
    }
    case Op::add:
    case Op::mul: {
      require(in.size() == 2, "add/mul: needs 2 inputs");
      const Bcast bc = classify_bcast(in[0].shape(), in[1].shape());
      require(bc != Bcast::invalid, std::string(op_name(op)) + ": incompatible shapes " +
                                        shape_str(in[0].shape()) + " and " +
                                        shape_str(in[1].shape()));
      const bool is_add = op == Op::add;
      if (bc == Bcast::scalar_lhs) {
        const double s = in[0][0];
        Tensor out(in[1].shape());
        double* o = out.mutable_data();
        const double* b = in[1].data();
        for (size_t i = 0; i < out.size(); ++i) o[i] = is_add ? s + b[i] : s * b[i];
        return out;
      }
      Tensor out(in[0].shape());
      double* o = out.mutable_data();
      const double* a = in[0].data();
      const double* b = in[1].data();
      const size_t total = out.size();
      if (bc == Bcast::same) {
        for (size_t i = 0; i < total; ++i) o[i] = is_add ? a[i] + b[i] : a[i] * b[i];
      } else if (bc == Bcast::scalar_rhs) {
        const double s = b[0];
        for (size_t i = 0; i < total; ++i) o[i] = is_add ? a[i] + s : a[i] * s;
      } else if (bc == Bcast::row_bias) {
        const size_t n = in[0].shape()[1];
        for (size_t i = 0; i < total; ++i) {
          const double bv = b[i % n];
          o[i] = is_add ? a[i] + bv : a[i] * bv;
        }
      } else {  // channel_bias
        const size_t hw = in[0].shape()[1] * in[0].shape()[2];
        for (size_t i = 0; i < total; ++i) {
          const double bv = b[i / hw];
          o[i] = is_add ? a[i] + bv : a[i] * bv;
        }
      }
      return out;
    }
    case Op::sigmoid:
    case Op::tanh:
    case Op::relu: {
      require(in.size() == 1, "unary op: needs 1 input");
      Tensor out(in[0].shape());
      double* o = out.mutable_data();
      const double* x = in[0].data();
      const size_t total = out.size();
      if (op == Op::sigmoid) {
        for (size_t i = 0; i < total; ++i) o[i] = 1.0 / (1.0 + std::exp(-x[i]));
      } else if (op == Op::tanh) {
        for (size_t i = 0; i < total; ++i) o[i] = std::tanh(x[i]);
      } else {
        for (size_t i = 0; i < total; ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
      }
      return out;
    }
    case Op::concat: {
      require(!in.empty(), "concat: needs at least 1 input");
      const int axis = attrs.axis;
      size_t outer, mid0, inner;
      axis_split(in[0].shape(), axis, &outer, &mid0, &inner);
      size_t mid_total = 0;
      for (const Tensor& t : in) {
        require(t.rank() == in[0].rank(), "concat: rank mismatch");
        for (size_t i = 0; i < t.rank(); ++i)
          require(static_cast<int>(i) == axis || t.shape()[i] == in[0].shape()[i],
                  "concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                      shape_str(in[0].shape()));
        mid_total += t.shape()[axis];
      }
      Shape os = in[0].shape();
      os[axis] = mid_total;
      Tensor out(os);
      double* o = out.mutable_data();
      size_t mid_off = 0;
      for (const Tensor& t : in) {
        const size_t mid = t.shape()[axis];
        const double* src = t.data();
        for (size_t ou = 0; ou < outer; ++ou) {
          std::memcpy(o + (ou * mid_total + mid_off) * inner, src + ou * mid * inner,
                      mid * inner * sizeof(double));
        }
        mid_off += mid;
      }
      return out;
    }
    case Op::slice: {
      require(in.size() == 1, "slice: needs 1 input");
      size_t outer, mid, inner;
      axis_split(in[0].shape(), attrs.axis, &outer, &mid, &inner);
      require(attrs.start < attrs.stop && attrs.stop <= mid,
              "slice: [" + std::to_string(attrs.start) + "," + std::to_string(attrs.stop) +
                  ") out of range for axis size " + std::to_string(mid));
      Shape os = in[0].shape();
      os[attrs.axis] = attrs.stop - attrs.start;
      Tensor out(os);
      double* o = out.mutable_data();
      const double* src = in[0].data();
      const size_t width = attrs.stop - attrs.start;
      for (size_t ou = 0; ou < outer; ++ou)
        std::memcpy(o + ou * width * inner, src + (ou * mid + attrs.start) * inner,
                    width * inner * sizeof(double));
      return out;
    }
    case Op::mean: {
      require(in.size() == 1 && in[0].size() > 0, "mean: needs 1 non-empty input");
      double s = 0.0;
      const double* x = in[0].data();
      for (size_t i = 0; i < in[0].size(); ++i) s += x[i];
      return Tensor::scalar(s / static_cast<double>(in[0].size()));
    }
    case Op::softmax_xent: {
      require(in.size() == 2, "softmax_xent: needs logits and targets");
      size_t n, k, row_stride, class_stride;
      softmax_xent_dims(in[0].shape(), in[1].shape(), &n, &k, &row_stride, &class_stride);
      const double* l = in[0].data();
      const double* t = in[1].data();
      Tensor probs(in[0].shape());
      double* p = probs.mutable_data();
      Tensor out(in[1].shape());
      double* o = out.mutable_data();
      for (size_t i = 0; i < n; ++i) {
        const double tv = t[i];
        const size_t ti = static_cast<size_t>(tv);
        require(tv == std::floor(tv) && tv >= 0.0 && ti < k,
                "softmax_xent: label " + std::to_string(tv) + " out of range [0," +
                    std::to_string(k) + ")");
        const double* row = l + i * row_stride;
        double mx = row[0];
        for (size_t c = 1; c < k; ++c) mx = std::max(mx, row[c * class_stride]);
        double se = 0.0;
        for (size_t c = 0; c < k; ++c) se += std::exp(row[c * class_stride] - mx);
        const double lse = mx + std::log(se);
        double* prow = p + i * row_stride;
        for (size_t c = 0; c < k; ++c)
          prow[c * class_stride] = std::exp(row[c * class_stride] - lse);
        o[i] = lse - row[ti * class_stride];
      }
      if (saved) *saved = probs;
      return out;
    }
    case Op::mse: {
      require(in.size() == 2 && in[0].same_shape(in[1]),
              "mse: shapes differ, " + shape_str(in[0].shape()) + " vs " +
                  shape_str(in[1].shape()));
      const double* a = in[0].data();
      const double* b = in[1].data();
      double s = 0.0;
      for (size_t i = 0; i < in[0].size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
      }
      return Tensor::scalar(s / static_cast<double>(in[0].size()));
    }
    case Op::reshape: {
      require(in.size() == 1, "reshape: needs 1 input");
      return in[0].reshaped(attrs.shape);
    }
  }
  fail("unknown op");
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::conv3x3: return "conv3x3";
    case Op::add: return "add";
    case Op::mul: return "mul";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::relu: return "relu";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::mean: return "mean";
    case Op::softmax_xent: return "softmax_xent";
    case Op::mse: return "mse";
    case Op::reshape: return "reshape";
  }
  return "?";
}

Tensor eval_op(Op op, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
  return forward_op(op, inputs, attrs, nullptr);
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

Tensor Tape::bind(const Tensor& value, int node) {
  Tensor t = value;
  t.tape_id = id_;
  t.node_id = node;
  t.requires_grad = nodes_[node].requires_grad;
  return t;
}

Tensor Tape::leaf(const Tensor& t, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.value = t;
  n.value.tape_id = 0;
  n.value.node_id = -1;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return bind(nodes_.back().value, static_cast<int>(nodes_.size()) - 1);
}

int Tape::ensure_on_tape(const Tensor& t) {
  if (t.tape_id == id_ && t.node_id >= 0) return t.node_id;
  // constants from outside (or from another tape) join as non-grad leaves
  Node n;
  n.op = Op::leaf;
  n.value = t;
  n.value.tape_id = 0;
  n.value.node_id = -1;
  n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::apply(Op op, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
  Node n;
  n.op = op;
  n.attrs = attrs;
  n.requires_grad = false;
  std::vector<Tensor> vals;
  vals.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    const int id = ensure_on_tape(t);
    n.inputs.push_back(id);
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    vals.push_back(nodes_[id].value);
  }
  // gradients never flow into class-id targets
  if (op == Op::softmax_xent && n.inputs.size() == 2 && nodes_[n.inputs[1]].requires_grad)
    fail("softmax_xent: targets must not require gradients");
  n.value = forward_op(op, vals, attrs, &n.saved);
  if (check_finite_ && !n.value.all_finite())
    fail(std::string(op_name(op)) + ": non-finite output in checked mode");
  nodes_.push_back(std::move(n));
  return bind(nodes_.back().value, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) { return apply(Op::matmul, {a, b}); }
Tensor Tape::conv3x3(const Tensor& x, const Tensor& w, int stride) {
  OpAttrs at;
  at.stride = stride;
  return apply(Op::conv3x3, {x, w}, at);
}
Tensor Tape::add(const Tensor& a, const Tensor& b) { return apply(Op::add, {a, b}); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return apply(Op::mul, {a, b}); }
Tensor Tape::sigmoid(const Tensor& x) { return apply(Op::sigmoid, {x}); }
Tensor Tape::tanh(const Tensor& x) { return apply(Op::tanh, {x}); }
Tensor Tape::relu(const Tensor& x) { return apply(Op::relu, {x}); }
Tensor Tape::concat(const std::vector<Tensor>& xs, int axis) {
  OpAttrs at;
  at.axis = axis;
  return apply(Op::concat, xs, at);
}
Tensor Tape::slice(const Tensor& x, int axis, size_t start, size_t stop) {
  OpAttrs at;
  at.axis = axis;
  at.start = start;
  at.stop = stop;
  return apply(Op::slice, {x}, at);
}
Tensor Tape::mean(const Tensor& x) { return apply(Op::mean, {x}); }
Tensor Tape::softmax_xent(const Tensor& logits, const Tensor& targets) {
  return apply(Op::softmax_xent, {logits, targets});
}
Tensor Tape::mse(const Tensor& a, const Tensor& b) { return apply(Op::mse, {a, b}); }
Tensor Tape::reshape(const Tensor& x, Shape shape) {
  OpAttrs at;
  at.shape = std::move(shape);
  return apply(Op::reshape, {x}, at);
}

void Tape::backward(const Tensor& loss) {
  require(loss.tape_id == id_ && loss.node_id >= 0, "backward: loss is not on this tape");
  require(loss.size() == 1, "backward: loss must be scalar, got shape " + shape_str(loss.shape()));

  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), 0);
  auto accum = [&](int id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    if (!has_grad_[id]) {
      grads_[id] = Tensor(nodes_[id].value.shape());
      has_grad_[id] = 1;
    }
    double* dst = grads_[id].mutable_data();
    const double* src = g.data();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  };

  const int root = loss.node_id;
  grads_[root] = Tensor::full(nodes_[root].value.shape(), 1.0);
  has_grad_[root] = 1;

  for (int id = root; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!has_grad_[id] || !n.requires_grad || n.op == Op::leaf) continue;
    const Tensor& g = grads_[id];
    const double* gp = g.data();

    switch (n.op) {
      case Op::matmul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        const size_t m = a.shape()[0], k = a.shape()[1];
        const size_t nn = b.rank() == 1 ? 1 : b.shape()[1];
        if (nodes_[n.inputs[0]].requires_grad) {
          Tensor da(a.shape());
          double* dap = da.mutable_data();
          const double* bp = b.data();
          for (size_t i = 0; i < m; ++i) {
            const double* grow = gp + i * nn;
            double* darow = dap + i * k;
            for (size_t kk = 0; kk < k; ++kk) {
              const double* brow = bp + kk * nn;
              double acc = 0.0;
              for (size_t j = 0; j < nn; ++j) acc += grow[j] * brow[j];
              darow[kk] = acc;
            }
          }
          accum(n.inputs[0], da);
        }
        if (nodes_[n.inputs[1]].requires_grad) {
          Tensor db(b.shape());
          double* dbp = db.mutable_data();
          const double* ap = a.data();
          for (size_t i = 0; i < m; ++i) {
            const double* grow = gp + i * nn;
            const double* arow = ap + i * k;
            for (size_t kk = 0; kk < k; ++kk) {
              const double av = arow[kk];
              double* dbrow = dbp + kk * nn;
              for (size_t j = 0; j < nn; ++j) dbrow[j] += av * grow[j];
            }
          }
          accum(n.inputs[1], db);
        }
        break;
      }
      case Op::conv3x3: {
        const Tensor& x = nodes_[n.inputs[0]].value;
        const Tensor& w = nodes_[n.inputs[1]].value;
        ConvDims d = conv_dims(x.shape(), w.shape(), n.attrs.stride);
        if (nodes_[n.inputs[0]].requires_grad) {
          Tensor dx(x.shape());
          conv_backward_input(gp, w.data(), dx.mutable_data(), d);
          accum(n.inputs[0], dx);
        }
        if (nodes_[n.inputs[1]].requires_grad) {
          Tensor dw(w.shape());
          conv_backward_weight(gp, x.data(), dw.mutable_data(), d);
          accum(n.inputs[1], dw);
        }
        break;
      }
      case Op::add:
      case Op::mul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        const Bcast bc = classify_bcast(a.shape(), b.shape());
        const bool is_add = n.op == Op::add;
        auto reduce_to = [&](const Shape& target, const Tensor& full, Bcast mode, bool lhs_scalar) {
          // sum `full` down to `target` along broadcast axes
          if (full.shape() == target) return full;
          Tensor r(target);
          double* rp = r.mutable_data();
          const double* fp = full.data();
          if (mode == Bcast::scalar_rhs || lhs_scalar) {
            double s = 0.0;
            for (size_t i = 0; i < full.size(); ++i) s += fp[i];
            rp[0] = s;
          } else if (mode == Bcast::row_bias) {
            const size_t nn = target[0];
            for (size_t i = 0; i < full.size(); ++i) rp[i % nn] += fp[i];
          } else {  // channel_bias
            const size_t hw = full.shape()[1] * full.shape()[2];
            for (size_t i = 0; i < full.size(); ++i) rp[i / hw] += fp[i];
          }
          return r;
        };
        if (is_add) {
          if (nodes_[n.inputs[0]].requires_grad)
            accum(n.inputs[0], bc == Bcast::scalar_lhs ? reduce_to(a.shape(), g, bc, true) : g);
          if (nodes_[n.inputs[1]].requires_grad)
            accum(n.inputs[1], bc == Bcast::scalar_lhs ? g : reduce_to(b.shape(), g, bc, false));
        } else {
          if (nodes_[n.inputs[0]].requires_grad) {
            Tensor da = eval_op(Op::mul, {g, b});
            accum(n.inputs[0], bc == Bcast::scalar_lhs ? reduce_to(a.shape(), da, bc, true) : da);
          }
          if (nodes_[n.inputs[1]].requires_grad) {
            Tensor db = eval_op(Op::mul, {g, a});
            accum(n.inputs[1], bc == Bcast::scalar_lhs ? db : reduce_to(b.shape(), db, bc, false));
          }
        }
        break;
      }
      case Op::sigmoid:
      case Op::tanh:
      case Op::relu: {
        if (!nodes_[n.inputs[0]].requires_grad) break;
        const Tensor& y = n.value;
        const Tensor& x = nodes_[n.inputs[0]].value;
        Tensor dx(x.shape());
        double* dp = dx.mutable_data();
        const double* yp = y.data();
        const double* xp = x.data();
        if (n.op == Op::sigmoid) {
          for (size_t i = 0; i < dx.size(); ++i) dp[i] = gp[i] * yp[i] * (1.0 - yp[i]);
        } else if (n.op == Op::tanh) {
          for (size_t i = 0; i < dx.size(); ++i) dp[i] = gp[i] * (1.0 - yp[i] * yp[i]);
        } else {
          for (size_t i = 0; i < dx.size(); ++i) dp[i] = xp[i] > 0.0 ? gp[i] : 0.0;
        }
        accum(n.inputs[0], dx);
        break;
      }
      case Op::concat: {
        size_t outer, mid_total, inner;
        axis_split(n.value.shape(), n.attrs.axis, &outer, &mid_total, &inner);
        size_t mid_off = 0;
        for (int idx : n.inputs) {
          const size_t mid = nodes_[idx].value.shape()[n.attrs.axis];
          if (nodes_[idx].requires_grad) {
            Tensor part(nodes_[idx].value.shape());
            double* pp = part.mutable_data();
            for (size_t ou = 0; ou < outer; ++ou)
              std::memcpy(pp + ou * mid * inner, gp + (ou * mid_total + mid_off) * inner,
                          mid * inner * sizeof(double));
            accum(idx, part);
          }
          mid_off += mid;
        }
        break;
      }
      case Op::slice: {
        if (!nodes_[n.inputs[0]].requires_grad) break;
        const Tensor& x = nodes_[n.inputs[0]].value;
        size_t outer, mid, inner;
        axis_split(x.shape(), n.attrs.axis, &outer, &mid, &inner);
        const size_t width = n.attrs.stop - n.attrs.start;
        Tensor dx(x.shape());
        double* dp = dx.mutable_data();
        for (size_t ou = 0; ou < outer; ++ou)
          std::memcpy(dp + (ou * mid + n.attrs.start) * inner, gp + ou * width * inner,
                      width * inner * sizeof(double));
        accum(n.inputs[0], dx);
        break;
      }
      case Op::mean: {
        if (!nodes_[n.inputs[0]].requires_grad) break;
        const Tensor& x = nodes_[n.inputs[0]].value;
        accum(n.inputs[0], Tensor::full(x.shape(), gp[0] / static_cast<double>(x.size())));
        break;
      }
      case Op::softmax_xent: {
        if (!nodes_[n.inputs[0]].requires_grad) break;
        const Tensor& logits = nodes_[n.inputs[0]].value;
        const Tensor& targets = nodes_[n.inputs[1]].value;
        size_t nn, k, row_stride, class_stride;
        softmax_xent_dims(logits.shape(), targets.shape(), &nn, &k, &row_stride, &class_stride);
        Tensor dl(logits.shape());
        double* dp = dl.mutable_data();
        const double* pp = n.saved.data();
        const double* tp = targets.data();
        for (size_t i = 0; i < nn; ++i) {
          const double gi = gp[i];
          const size_t ti = static_cast<size_t>(tp[i]);
          const double* prow = pp + i * row_stride;
          double* drow = dp + i * row_stride;
          for (size_t c = 0; c < k; ++c) drow[c * class_stride] = gi * prow[c * class_stride];
          drow[ti * class_stride] -= gi;
        }
        accum(n.inputs[0], dl);
        break;
      }
      case Op::mse: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        const double scale = 2.0 * gp[0] / static_cast<double>(a.size());
        const double* ap = a.data();
        const double* bp = b.data();
        if (nodes_[n.inputs[0]].requires_grad) {
          Tensor da(a.shape());
          double* dp = da.mutable_data();
          for (size_t i = 0; i < a.size(); ++i) dp[i] = scale * (ap[i] - bp[i]);
          accum(n.inputs[0], da);
        }
        if (nodes_[n.inputs[1]].requires_grad) {
          Tensor db(b.shape());
          double* dp = db.mutable_data();
          for (size_t i = 0; i < a.size(); ++i) dp[i] = scale * (bp[i] - ap[i]);
          accum(n.inputs[1], db);
        }
        break;
      }
      case Op::reshape: {
        if (!nodes_[n.inputs[0]].requires_grad) break;
        accum(n.inputs[0], g.reshaped(nodes_[n.inputs[0]].value.shape()));
        break;
      }
      case Op::leaf:
        break;
    }
  }
}

bool Tape::has_grad(const Tensor& t) const {
  return t.tape_id == id_ && t.node_id >= 0 &&
         static_cast<size_t>(t.node_id) < has_grad_.size() && has_grad_[t.node_id];
}

const Tensor& Tape::grad(const Tensor& t) const {
  if (!has_grad(t)) fail("grad: no gradient recorded for this tensor");
  return grads_[t.node_id];
}

std::unordered_map<int, Tensor> Tape::gradients() const {
  std::unordered_map<int, Tensor> out;
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (i < has_grad_.size() && has_grad_[i] && nodes_[i].op == Op::leaf &&
        nodes_[i].requires_grad)
      out.emplace(static_cast<int>(i), grads_[i]);
  return out;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& point,
                  double epsilon) {
  Tape tape;
  Tensor x = tape.leaf(point, true);
  Tensor y = f(tape, x);
  if (y.size() != 1) fail("grad_check: f must be scalar-valued");
  tape.backward(y);
  Tensor g = tape.grad(x);

  auto value_at = [&](const Tensor& p) {
    Tape t;
    Tensor xx = t.leaf(p, false);
    return f(t, xx).item();
  };

  double max_err = 0.0;
  for (size_t i = 0; i < point.size(); ++i) {
    Tensor hi = point;
    Tensor lo = point;
    hi.mutable_data()[i] += epsilon;
    lo.mutable_data()[i] -= epsilon;
    const double numeric = (value_at(hi) - value_at(lo)) / (2.0 * epsilon);
    const double err = std::abs(g[i] - numeric) / std::max(1.0, std::abs(numeric));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace mfpn
