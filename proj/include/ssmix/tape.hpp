#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssmix/tensor.hpp"

namespace ssmix {

namespace nn {
struct Param;
}

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const;
  std::size_t numel() const;
};

// Reverse-mode autodiff tape. Nodes are appended in evaluation order (which
// is a topological order), so backward() is a single reverse sweep. Gradients
// of nodes created via param() are accumulated into the bound Param's grad.
class Tape {
 public:
  Var constant(Tensor v);       // value only, never differentiated
  Var input(Tensor v);          // differentiable leaf (for tests / probes)
  Var param(nn::Param& p);      // differentiable leaf bound to a parameter

  // Generic node builder used by all ops. `backward` runs during the reverse
  // sweep; it must read this node's gradient and push contributions into the
  // parents via add_grad(). It is dropped when no parent needs gradients.
  Var make(Tensor value, const std::vector<Var>& parents,
           std::function<void(Tape&, int)> backward);

  // Seeds d(root)/d(root) = 1 (root must hold exactly one element) and runs
  // the reverse sweep, accumulating leaf gradients into bound Params.
  void backward(Var root);

  const Tensor& value(int id) const;
  const Tensor& grad(int id) const;       // zeros if untouched
  void add_grad(int id, const Tensor& g); // shape must equal node shape
  void add_grad(int id, Tensor&& g);
  bool tracked(int id) const;
  bool grad_touched(int id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    nn::Param* bound = nullptr;
    std::function<void(Tape&, int)> back;
  };

  std::vector<Node> nodes_;
  Tensor empty_grad_;  // scratch zero tensor returned for untouched grads
};

// ---- Generic differentiable ops (broadcasting where noted) ----

Var add(Var a, Var b);          // broadcasting
Var sub(Var a, Var b);          // broadcasting
Var mul(Var a, Var b);          // broadcasting
Var divide(Var a, Var b);       // broadcasting
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

Var matmul(Var a, Var b);       // [m,k] x [k,n] -> [m,n]
Var transpose2d(Var a);         // [m,n] -> [n,m]
Var reshape(Var a, Shape s);
Var concat0(Var a, Var b);      // stack along axis 0; trailing dims must match
Var slice0(Var a, std::size_t start, std::size_t len);

Var tanh_op(Var a);
Var relu(Var a);
Var exp_op(Var a);
Var square(Var a);
Var sqrt_shift(Var a, double eps);  // sqrt(x + eps), smooth at x = 0

Var sum_all(Var a);   // -> [1]
Var mean_all(Var a);  // -> [1]

// Softmax along one axis (numerically stabilised per line).
Var softmax_axis(Var a, std::size_t axis);

// Per-row batch normalisation over columns: x is [D,N], gamma/beta are [D,1].
// Uses the statistics of the given batch (the model always sees the whole
// image as one batch, so there are no running statistics).
Var batchnorm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);

// Column gather/scatter for token selection. x is [D,N].
Var gather_cols(Var x, std::vector<int> idx);                    // -> [D,K]
Var scatter_cols_sum(Var y, std::vector<int> idx, std::size_t n);  // -> [D,N]

// Weighted reduction of one axis to size 1: out = sum_k w[k] * x[..k..] + b.
// w has shape [x.shape[axis]], b has shape [1].
Var contract_axis(Var x, Var w, Var b, std::size_t axis);

}  // namespace ssmix
