#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "mfpn/tensor.hpp"

namespace mfpn {

enum class Op {
  leaf,
  matmul,
  conv3x3,
  add,
  mul,
  sigmoid,
  tanh,
  relu,
  concat,
  slice,
  mean,
  softmax_xent,
  mse,
  reshape,
};

const char* op_name(Op op);

struct OpAttrs {
  int stride = 1;                // conv3x3: 1 or 2, zero padding "same"
  int axis = 0;                  // concat / slice
  size_t start = 0, stop = 0;    // slice: [start, stop) along axis
  Shape shape;                   // reshape target
};

// Reverse-mode tape over tensor ops. Nodes are recorded in creation order,
// which is already topological. A tape is confined to one thread.
class Tape {
 public:
  Tape();

  // Registers a leaf bound to this tape. Gradients are produced for leaves
  // with requires_grad after backward().
  Tensor leaf(const Tensor& t, bool requires_grad);

  Tensor apply(Op op, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor conv3x3(const Tensor& x, const Tensor& w, int stride = 1);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor concat(const std::vector<Tensor>& xs, int axis);
  Tensor slice(const Tensor& x, int axis, size_t start, size_t stop);
  Tensor mean(const Tensor& x);
  // logits {N,K} with targets {N}, or logits {K,H,W} with targets {H,W};
  // returns per-row / per-pixel cross-entropy
  Tensor softmax_xent(const Tensor& logits, const Tensor& targets);
  Tensor mse(const Tensor& a, const Tensor& b);
  Tensor reshape(const Tensor& x, Shape shape);

  // Populates gradients for every requires_grad leaf reachable from `loss`.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& t) const;
  const Tensor& grad(const Tensor& t) const;
  std::unordered_map<int, Tensor> gradients() const;  // node id -> gradient

  // When on, any op producing a non-finite value is rejected.
  void set_check_finite(bool on) { check_finite_ = on; }

  size_t num_nodes() const { return nodes_.size(); }
  uint64_t id() const { return id_; }

 private:
  struct Node {
    Op op;
    std::vector<int> inputs;
    OpAttrs attrs;
    Tensor value;
    Tensor saved;  // op-specific (softmax probs)
    bool requires_grad = false;
  };

  int ensure_on_tape(const Tensor& t);
  Tensor bind(const Tensor& value, int node);

  uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<char> has_grad_;
  bool check_finite_ = false;
};

// Forward-only evaluation without a tape.
Tensor eval_op(Op op, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});

// Max over coordinates of |analytic - numeric| / max(1, |numeric|), with the
// numeric gradient from central differences of step epsilon. `f` must map a
// leaf bound to the given tape to a scalar.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& point, double epsilon);

}  // namespace mfpn
