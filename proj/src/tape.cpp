#include "ssmix/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ssmix/nn.hpp"

namespace ssmix {

const Tensor& Var::value() const {
  if (!valid()) throw std::logic_error("Var::value on invalid handle");
  return tape->value(id);
}

const Shape& Var::shape() const { return value().shape(); }
std::size_t Var::numel() const { return value().numel(); }

Var Tape::constant(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(nn::Param& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make(Tensor value, const std::vector<Var>& parents,
               std::function<void(Tape&, int)> backward) {
  bool needs_grad = false;
  for (const Var& p : parents) {
    if (!p.valid() || p.tape != this)
      throw std::logic_error("Tape::make: parent from another tape");
    if (nodes_[p.id].requires_grad) needs_grad = true;
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs_grad;
  if (needs_grad) n.back = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
  if (!root.valid() || root.tape != this)
    throw std::logic_error("Tape::backward: root not on this tape");
  if (value(root.id).numel() != 1)
    throw std::logic_error("Tape::backward: root must hold a single element");
  {
    Node& r = nodes_[root.id];
    if (!r.requires_grad)
      throw std::logic_error("Tape::backward: root does not depend on any input");
    r.grad = Tensor(r.value.shape(), 1.0);
    r.grad_alloc = true;
  }
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.grad_alloc) continue;
    if (n.bound != nullptr) {
      Tensor& pg = n.bound->grad;
      if (!pg.same_shape(n.grad))
        throw std::logic_error("Tape::backward: param grad shape mismatch for " +
                               n.bound->name);
      for (std::size_t i = 0; i < pg.numel(); ++i) pg[i] += n.grad[i];
    } else if (n.back) {
      n.back(*this, id);
    }
  }
}

const Tensor& Tape::value(int id) const { return nodes_.at(id).value; }

const Tensor& Tape::grad(int id) const {
  const Node& n = nodes_.at(id);
  if (!n.grad_alloc) {
    // Lazily materialise a zero gradient for inspection.
    const_cast<Node&>(n).grad = Tensor::zeros(n.value.shape());
    const_cast<Node&>(n).grad_alloc = true;
  }
  return n.grad;
}

void Tape::add_grad(int id, const Tensor& g) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape())
    throw std::logic_error("Tape::add_grad: gradient shape " + shape_str(g.shape()) +
                           " does not match node shape " + shape_str(n.value.shape()));
  if (!n.grad_alloc) {
    n.grad = g;
    n.grad_alloc = true;
    return;
  }
  for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

void Tape::add_grad(int id, Tensor&& g) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape())
    throw std::logic_error("Tape::add_grad: gradient shape " + shape_str(g.shape()) +
                           " does not match node shape " + shape_str(n.value.shape()));
  if (!n.grad_alloc) {
    n.grad = std::move(g);
    n.grad_alloc = true;
    return;
  }
  for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

bool Tape::tracked(int id) const { return nodes_.at(id).requires_grad; }
bool Tape::grad_touched(int id) const { return nodes_.at(id).grad_alloc; }

namespace {

Tape& tape_of(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw std::logic_error("op: operands must live on the same tape");
  return *a.tape;
}

Tensor bcast_eval(const Tensor& a, const Tensor& b,
                  const std::function<double(double, double)>& f) {
  Tensor out(broadcast_shape(a.shape(), b.shape()));
  bcast_binary(a, b, out, f);
  return out;
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Tensor out = bcast_eval(a.value(), b.value(), [](double x, double y) { return x + y; });
  return t.make(std::move(out), {a, b}, [pa = a.id, pb = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.tracked(pa)) t.add_grad(pa, reduce_to_shape(g, t.value(pa).shape()));
    if (t.tracked(pb)) t.add_grad(pb, reduce_to_shape(g, t.value(pb).shape()));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Tensor out = bcast_eval(a.value(), b.value(), [](double x, double y) { return x - y; });
  return t.make(std::move(out), {a, b}, [pa = a.id, pb = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.tracked(pa)) t.add_grad(pa, reduce_to_shape(g, t.value(pa).shape()));
    if (t.tracked(pb)) {
      Tensor gn(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) gn[i] = -g[i];
      t.add_grad(pb, reduce_to_shape(gn, t.value(pb).shape()));
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Tensor out = bcast_eval(a.value(), b.value(), [](double x, double y) { return x * y; });
  return t.make(std::move(out), {a, b}, [pa = a.id, pb = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.tracked(pa)) {
      Tensor ga = bcast_eval(t.value(pb), g, [](double y, double gg) { return y * gg; });
      t.add_grad(pa, reduce_to_shape(ga, t.value(pa).shape()));
    }
    if (t.tracked(pb)) {
      Tensor gb = bcast_eval(t.value(pa), g, [](double x, double gg) { return x * gg; });
      t.add_grad(pb, reduce_to_shape(gb, t.value(pb).shape()));
    }
  });
}

Var divide(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Tensor out = bcast_eval(a.value(), b.value(), [](double x, double y) { return x / y; });
  return t.make(std::move(out), {a, b}, [pa = a.id, pb = b.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.tracked(pa)) {
      Tensor ga = bcast_eval(g, t.value(pb), [](double gg, double y) { return gg / y; });
      t.add_grad(pa, reduce_to_shape(ga, t.value(pa).shape()));
    }
    if (t.tracked(pb)) {
      // d(a/b)/db = -a / b^2, evaluated against the broadcast output grid.
      Tensor q = bcast_eval(t.value(pa), t.value(pb),
                            [](double x, double y) { return -x / (y * y); });
      Tensor gb = bcast_eval(q, g, [](double qq, double gg) { return qq * gg; });
      t.add_grad(pb, reduce_to_shape(gb, t.value(pb).shape()));
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return t.make(std::move(out), {a}, [pa = a.id, c](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = c * g[i];
    t.add_grad(pa, std::move(ga));
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c;
  return t.make(std::move(out), {a}, [pa = a.id](Tape& t, int self) {
    t.add_grad(pa, t.grad(self));
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
    throw std::invalid_argument("matmul: need [m,k]x[k,n], got " + shape_str(av.shape()) +
                                " x " + shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = av.data() + i * k;
    double* orow = out.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return t.make(std::move(out), {a, b}, [pa = a.id, pb = b.id, m, k, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.tracked(pa)) {
      // dA = g . B^T
      const Tensor& bv = t.value(pb);
      Tensor ga(Shape{m, k});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double s = 0.0;
          const double* grow = g.data() + i * n;
          const double* brow = bv.data() + kk * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + kk] = s;
        }
      t.add_grad(pa, std::move(ga));
    }
    if (t.tracked(pb)) {
      // dB = A^T . g
      const Tensor& av = t.value(pa);
      Tensor gb(Shape{k, n});
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = av.data() + i * k;
        const double* grow = g.data() + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = arow[kk];
          if (aik == 0.0) continue;
          double* brow = gb.data() + kk * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
        }
      }
      t.add_grad(pb, std::move(gb));
    }
  });
}

Var transpose2d(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (av.ndim() != 2) throw std::invalid_argument("transpose2d: need rank 2");
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return t.make(std::move(out), {a}, [pa = a.id, m, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor ga(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] = g[j * m + i];
    t.add_grad(pa, std::move(ga));
  });
}

Var reshape(Var a, Shape s) {
  Tape& t = *a.tape;
  Tensor out = a.value().reshaped(s);
  return t.make(std::move(out), {a}, [pa = a.id](Tape& t, int self) {
    t.add_grad(pa, t.grad(self).reshaped(t.value(pa).shape()));
  });
}

Var concat0(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != bv.ndim())
    throw std::invalid_argument("concat0: rank mismatch");
  Shape s = av.shape();
  for (std::size_t d = 1; d < s.size(); ++d)
    if (bv.dim(d) != s[d]) throw std::invalid_argument("concat0: trailing dims differ");
  s[0] += bv.dim(0);
  Tensor out(s);
  std::copy(av.data(), av.data() + av.numel(), out.data());
  std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
  const std::size_t na = av.numel(), nb = bv.numel();
  return t.make(std::move(out), {a, b}, [pa = a.id, pb = b.id, na, nb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.tracked(pa)) {
      Tensor ga(t.value(pa).shape());
      std::copy(g.data(), g.data() + na, ga.data());
      t.add_grad(pa, std::move(ga));
    }
    if (t.tracked(pb)) {
      Tensor gb(t.value(pb).shape());
      std::copy(g.data() + na, g.data() + na + nb, gb.data());
      t.add_grad(pb, std::move(gb));
    }
  });
}

Var slice0(Var a, std::size_t start, std::size_t len) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (start + len > av.dim(0)) throw std::invalid_argument("slice0: out of range");
  Shape s = av.shape();
  s[0] = len;
  std::size_t inner = av.numel() / av.dim(0);
  Tensor out(s);
  std::copy(av.data() + start * inner, av.data() + (start + len) * inner, out.data());
  return t.make(std::move(out), {a}, [pa = a.id, start, inner](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor ga = Tensor::zeros(t.value(pa).shape());
    std::copy(g.data(), g.data() + g.numel(), ga.data() + start * inner);
    t.add_grad(pa, std::move(ga));
  });
}

namespace {

template <typename FwdFn, typename BwdFn>
Var unary_op(Var a, FwdFn fwd, BwdFn bwd_from_xy) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i]);
  return t.make(std::move(out), {a}, [pa = a.id, bwd_from_xy](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(pa);
    const Tensor& y = t.value(self);
    Tensor ga(g.shape());
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * bwd_from_xy(x[i], y[i]);
    t.add_grad(pa, std::move(ga));
  });
}

}  // namespace

Var tanh_op(Var a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp_op(Var a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt_shift(Var a, double eps) {
  return unary_op(
      a, [eps](double x) { return std::sqrt(x + eps); },
      [](double, double y) { return 0.5 / y; });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  Tensor out = Tensor::scalar(a.value().sum());
  return t.make(std::move(out), {a}, [pa = a.id](Tape& t, int self) {
    const double g = t.grad(self)[0];
    Tensor ga(t.value(pa).shape(), g);
    t.add_grad(pa, std::move(ga));
  });
}

Var mean_all(Var a) {
  Tape& t = *a.tape;
  const double n = static_cast<double>(a.value().numel());
  Tensor out = Tensor::scalar(a.value().sum() / n);
  return t.make(std::move(out), {a}, [pa = a.id, n](Tape& t, int self) {
    const double g = t.grad(self)[0] / n;
    Tensor ga(t.value(pa).shape(), g);
    t.add_grad(pa, std::move(ga));
  });
}

namespace {

// Decompose shape around `axis` as outer x n x inner for line iteration.
void axis_extents(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& n,
                  std::size_t& inner) {
  if (axis >= s.size()) throw std::invalid_argument("axis out of range");
  outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  n = s[axis];
  inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
}

}  // namespace

Var softmax_axis(Var a, std::size_t axis) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  std::size_t outer, n, inner;
  axis_extents(av.shape(), axis, outer, n, inner);
  Tensor out(av.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = -1e308;
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, av[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double e = std::exp(av[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
    }
  }
  return t.make(std::move(out), {a},
                [pa = a.id, outer, n, inner](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  const Tensor& y = t.value(self);
                  Tensor ga(g.shape());
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t i = 0; i < inner; ++i) {
                      const std::size_t base = o * n * inner + i;
                      double dot = 0.0;
                      for (std::size_t j = 0; j < n; ++j)
                        dot += g[base + j * inner] * y[base + j * inner];
                      for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t k = base + j * inner;
                        ga[k] = y[k] * (g[k] - dot);
                      }
                    }
                  }
                  t.add_grad(pa, std::move(ga));
                });
}

Var batchnorm_rows(Var x, Var gamma, Var beta, double eps) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("batchnorm_rows: x must be [D,N]");
  const std::size_t d = xv.dim(0), n = xv.dim(1);
  if (gamma.value().shape() != Shape{d, 1} || beta.value().shape() != Shape{d, 1})
    throw std::invalid_argument("batchnorm_rows: gamma/beta must be [D,1]");
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor xhat(Shape{d, n});
  Tensor inv_std(Shape{d, 1});
  Tensor out(Shape{d, n});
  for (std::size_t r = 0; r < d; ++r) {
    const double* row = xv.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mu) * is;
      xhat[r * n + j] = xh;
      out[r * n + j] = gm[r] * xh + bt[r];
    }
  }
  return t.make(
      std::move(out), {x, gamma, beta},
      [px = x.id, pg = gamma.id, pb = beta.id, d, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& gm = t.value(pg);
        const double dn = static_cast<double>(n);
        if (t.tracked(pg)) {
          Tensor dgamma(Shape{d, 1});
          for (std::size_t r = 0; r < d; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[r * n + j] * xhat[r * n + j];
            dgamma[r] = s;
          }
          t.add_grad(pg, std::move(dgamma));
        }
        if (t.tracked(pb)) {
          Tensor dbeta(Shape{d, 1});
          for (std::size_t r = 0; r < d; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[r * n + j];
            dbeta[r] = s;
          }
          t.add_grad(pb, std::move(dbeta));
        }
        if (t.tracked(px)) {
          Tensor dx(Shape{d, n});
          for (std::size_t r = 0; r < d; ++r) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[r * n + j] * gm[r];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xhat[r * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dxh = g[r * n + j] * gm[r];
              dx[r * n + j] = inv_std[r] / dn *
                              (dn * dxh - sum_dxh - xhat[r * n + j] * sum_dxh_xh);
            }
          }
          t.add_grad(px, std::move(dx));
        }
      });
}

Var gather_cols(Var x, std::vector<int> idx) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("gather_cols: x must be [D,N]");
  const std::size_t d = xv.dim(0), n = xv.dim(1), k = idx.size();
  for (int j : idx)
    if (j < 0 || static_cast<std::size_t>(j) >= n)
      throw std::out_of_range("gather_cols: column index out of range");
  Tensor out(Shape{d, k});
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < k; ++j)
      out[r * k + j] = xv[r * n + static_cast<std::size_t>(idx[j])];
  return t.make(std::move(out), {x},
                [px = x.id, idx = std::move(idx), d, n, k](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  Tensor gx = Tensor::zeros(Shape{d, n});
                  for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t j = 0; j < k; ++j)
                      gx[r * n + static_cast<std::size_t>(idx[j])] += g[r * k + j];
                  t.add_grad(px, std::move(gx));
                });
}

Var scatter_cols_sum(Var y, std::vector<int> idx, std::size_t n) {
  Tape& t = *y.tape;
  const Tensor& yv = y.value();
  if (yv.ndim() != 2) throw std::invalid_argument("scatter_cols_sum: y must be [D,K]");
  const std::size_t d = yv.dim(0), k = yv.dim(1);
  if (idx.size() != k)
    throw std::invalid_argument("scatter_cols_sum: index count must match columns");
  for (int j : idx)
    if (j < 0 || static_cast<std::size_t>(j) >= n)
      throw std::out_of_range("scatter_cols_sum: column index out of range");
  Tensor out = Tensor::zeros(Shape{d, n});
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < k; ++j)
      out[r * n + static_cast<std::size_t>(idx[j])] += yv[r * k + j];
  return t.make(std::move(out), {y},
                [py = y.id, idx = std::move(idx), d, n, k](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  Tensor gy(Shape{d, k});
                  for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t j = 0; j < k; ++j)
                      gy[r * k + j] = g[r * n + static_cast<std::size_t>(idx[j])];
                  t.add_grad(py, std::move(gy));
                });
}

Var contract_axis(Var x, Var w, Var b, std::size_t axis) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  std::size_t outer, n, inner;
  axis_extents(xv.shape(), axis, outer, n, inner);
  if (w.value().shape() != Shape{n})
    throw std::invalid_argument("contract_axis: weight must match reduced axis length");
  if (b.value().numel() != 1)
    throw std::invalid_argument("contract_axis: bias must be a scalar tensor");
  const Tensor& wv = w.value();
  const double bv = b.value()[0];
  Shape os = xv.shape();
  os[axis] = 1;
  Tensor out(os);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double s = bv;
      for (std::size_t j = 0; j < n; ++j) s += wv[j] * xv[(o * n + j) * inner + i];
      out[o * inner + i] = s;
    }
  return t.make(std::move(out), {x, w, b},
                [px = x.id, pw = w.id, pb = b.id, outer, n, inner](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  const Tensor& xv = t.value(px);
                  const Tensor& wv = t.value(pw);
                  if (t.tracked(px)) {
                    Tensor gx(xv.shape());
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t j = 0; j < n; ++j)
                        for (std::size_t i = 0; i < inner; ++i)
                          gx[(o * n + j) * inner + i] = wv[j] * g[o * inner + i];
                    t.add_grad(px, std::move(gx));
                  }
                  if (t.tracked(pw)) {
                    Tensor gw(Shape{n});
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < inner; ++i)
                          s += xv[(o * n + j) * inner + i] * g[o * inner + i];
                        gw[j] += s;
                      }
                    t.add_grad(pw, std::move(gw));
                  }
                  if (t.tracked(pb)) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < g.numel(); ++k) s += g[k];
                    Tensor gb(t.value(pb).shape(), 0.0);
                    for (std::size_t k = 0; k < gb.numel(); ++k) gb[k] = s;
                    t.add_grad(pb, std::move(gb));
                  }
                });
}

}  // namespace ssmix
