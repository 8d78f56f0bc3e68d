#include "ssmix/unmixing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssmix {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
}  // namespace

Tensor positional_codes(std::size_t height, std::size_t width, PosFlavor flavor) {
  if (height == 0 || width == 0)
    throw std::invalid_argument("positional_codes: empty grid");
  const std::size_t n = height * width;
  Tensor pos(Shape{3, n});
  for (std::size_t i = 0; i < height; ++i) {
    const double y = height == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(height - 1);
    for (std::size_t j = 0; j < width; ++j) {
      const double x = width == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(width - 1);
      const std::size_t k = i * width + j;
      if (flavor == PosFlavor::kUnmix) {
        pos[0 * n + k] = x;
        pos[1 * n + k] = y;
        pos[2 * n + k] = 0.5 * (std::sin(kTwoPi * x) + std::cos(kTwoPi * y));
      } else {
        pos[0 * n + k] = std::sin(kTwoPi * x);
        pos[1 * n + k] = std::cos(kTwoPi * y);
        pos[2 * n + k] = 0.5 * (x + y);
      }
    }
  }
  return pos;
}

Var PositionalGate::operator()(Tape& t, Var f, const Tensor& pos) const {
  const std::size_t n = height * width;
  if (f.shape() != Shape{dim, n})
    throw std::invalid_argument("PositionalGate: feature shape " + shape_str(f.shape()) +
                                " does not match gate grid");
  if (pos.shape() != Shape{3, n})
    throw std::invalid_argument("PositionalGate: positional code shape mismatch");

  Var fcat = concat0(f, t.constant(pos));  // [D+3, N]
  Var qflat = q(t, fcat);                  // [D, N]
  Var kw = t.param(*k_w);
  Var kb = t.param(*k_b);
  Var vw = t.param(*v_w);
  Var vb = t.param(*v_b);

  if (flavor == PosFlavor::kUnmix) {
    Var f3 = reshape(f, Shape{dim, height, width});
    Var q3 = reshape(qflat, Shape{dim, height, width});
    Var k = contract_axis(f3, kw, kb, 1);  // [D,1,W]
    Var v = contract_axis(f3, vw, vb, 2);  // [D,H,1]
    Var gated = add(mul(tanh_op(mul(q3, k)), v), f3);
    return reshape(gated, Shape{dim, n});
  }
  // Classify flavour: channel reductions give one scalar per pixel.
  Var k = contract_axis(f, kw, kb, 0);  // [1,N]
  Var v = contract_axis(f, vw, vb, 0);  // [1,N]
  return add(mul(tanh_op(mul(qflat, k)), v), f);
}

PositionalGate make_positional_gate(nn::ParamStore& ps, const std::string& name,
                                    PosFlavor flavor, std::size_t dim, std::size_t height,
                                    std::size_t width, int group, Rng& rng) {
  PositionalGate g;
  g.flavor = flavor;
  g.dim = dim;
  g.height = height;
  g.width = width;
  g.q = nn::make_linear(ps, name + ".q", dim + 3, dim, group, rng);
  const std::size_t klen = flavor == PosFlavor::kUnmix ? height : dim;
  const std::size_t vlen = flavor == PosFlavor::kUnmix ? width : dim;
  // Reductions start at zero so a freshly built gate is the identity map.
  g.k_w = &ps.add(name + ".k_w", Tensor::zeros(Shape{klen}), group);
  g.k_b = &ps.add(name + ".k_b", Tensor::zeros(Shape{1}), group);
  g.v_w = &ps.add(name + ".v_w", Tensor::zeros(Shape{vlen}), group);
  g.v_b = &ps.add(name + ".v_b", Tensor::zeros(Shape{1}), group);
  return g;
}

Var AbundanceHead::operator()(Tape& t, Var f) const {
  Var h = relu(bn1(t, c1(t, f)));
  h = relu(bn2(t, c2(t, h)));
  return c3(t, h);
}

AbundanceHead make_abundance_head(nn::ParamStore& ps, const std::string& name,
                                  std::size_t dim, std::size_t endmembers, int group,
                                  Rng& rng) {
  AbundanceHead h;
  const std::size_t mid = std::max<std::size_t>(1, dim / 2);
  h.c1 = nn::make_linear(ps, name + ".c1", dim, dim, group, rng);
  h.bn1 = nn::make_batchnorm(ps, name + ".bn1", dim, group);
  h.c2 = nn::make_linear(ps, name + ".c2", dim, mid, group, rng);
  h.bn2 = nn::make_batchnorm(ps, name + ".bn2", mid, group);
  h.c3 = nn::make_linear(ps, name + ".c3", mid, endmembers, group, rng);
  return h;
}

Var abs_normalize_cols(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.ndim() != 2) throw std::invalid_argument("abs_normalize_cols: x must be [P,N]");
  const std::size_t p = xv.dim(0), n = xv.dim(1);
  constexpr double kZeroColumn = 1e-12;  // below this total mass: uniform fallback
  Tensor out(Shape{p, n});
  std::vector<std::uint8_t> degenerate(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0;
    for (std::size_t r = 0; r < p; ++r) s += std::abs(xv[r * n + j]);
    if (s < kZeroColumn) {
      degenerate[j] = 1;
      for (std::size_t r = 0; r < p; ++r) out[r * n + j] = 1.0 / static_cast<double>(p);
    } else {
      for (std::size_t r = 0; r < p; ++r) out[r * n + j] = std::abs(xv[r * n + j]) / s;
    }
  }
  return t.make(std::move(out), {x},
                [px = x.id, p, n, degenerate = std::move(degenerate)](Tape& t, int self) {
                  const Tensor& g = t.grad(self);
                  const Tensor& xv = t.value(px);
                  const Tensor& y = t.value(self);
                  Tensor gx = Tensor::zeros(Shape{p, n});
                  for (std::size_t j = 0; j < n; ++j) {
                    if (degenerate[j]) continue;  // constant output: zero gradient
                    double s = 0;
                    for (std::size_t r = 0; r < p; ++r) s += std::abs(xv[r * n + j]);
                    double dot = 0;
                    for (std::size_t r = 0; r < p; ++r) dot += g[r * n + j] * y[r * n + j];
                    for (std::size_t r = 0; r < p; ++r) {
                      const double x = xv[r * n + j];
                      const double sign = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
                      gx[r * n + j] = sign * (g[r * n + j] - dot) / s;
                    }
                  }
                  t.add_grad(px, std::move(gx));
                });
}

Var VariabilityHead::operator()(Tape& t, Var f_abu) const {
  const std::size_t n = f_abu.shape().at(1);
  Var z = proj(t, f_abu);                                   // [P*R, N]
  Var z3 = reshape(z, Shape{endmembers, variants, n});      // [P, R, N]
  return softmax_axis(z3, 1);
}

VariabilityHead make_variability_head(nn::ParamStore& ps, const std::string& name,
                                      std::size_t endmembers, std::size_t variants,
                                      int group, Rng& rng) {
  VariabilityHead h;
  h.endmembers = endmembers;
  h.variants = variants;
  h.proj = nn::make_linear(ps, name + ".proj", endmembers, endmembers * variants, group, rng);
  return h;
}

Var EndmemberBank::clamped(Tape& t) const { return relu(t.param(*spectra)); }

Tensor EndmemberBank::mean_spectra() const {
  Tensor m(Shape{endmembers, bands});
  const Tensor& s = spectra->value;
  for (std::size_t p = 0; p < endmembers; ++p)
    for (std::size_t c = 0; c < bands; ++c) {
      double acc = 0;
      for (std::size_t r = 0; r < variants; ++r)
        acc += std::max(0.0, s[(p * variants + r) * bands + c]);
      m[p * bands + c] = acc / static_cast<double>(variants);
    }
  return m;
}

EndmemberBank make_endmember_bank(nn::ParamStore& ps, const std::string& name,
                                  const Tensor& initial, std::size_t variants, int group,
                                  bool trainable) {
  if (initial.ndim() != 2)
    throw std::invalid_argument("make_endmember_bank: initial spectra must be [P,C]");
  if (variants == 0) throw std::invalid_argument("make_endmember_bank: need at least 1 variant");
  EndmemberBank b;
  b.endmembers = initial.dim(0);
  b.variants = variants;
  b.bands = initial.dim(1);
  Tensor init(Shape{b.endmembers, variants, b.bands});
  for (std::size_t p = 0; p < b.endmembers; ++p)
    for (std::size_t r = 0; r < variants; ++r)
      for (std::size_t c = 0; c < b.bands; ++c)
        init[(p * variants + r) * b.bands + c] = initial[p * b.bands + c];
  b.spectra = &ps.add(name + ".spectra", std::move(init), group);
  b.spectra->trainable = trainable;
  return b;
}

Var reconstruct_mixture(Var a, Var s, Var w) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const Tensor& sv = s.value();
  const Tensor& wv = w.value();
  if (av.ndim() != 2 || sv.ndim() != 3 || wv.ndim() != 3)
    throw std::invalid_argument("reconstruct_mixture: expected A[P,N], S[P,R,C], w[P,R,N]");
  const std::size_t p = av.dim(0), n = av.dim(1);
  const std::size_t r = sv.dim(1), c = sv.dim(2);
  if (sv.dim(0) != p || wv.dim(0) != p || wv.dim(1) != r || wv.dim(2) != n)
    throw std::invalid_argument("reconstruct_mixture: inconsistent shapes A" +
                                shape_str(av.shape()) + " S" + shape_str(sv.shape()) + " w" +
                                shape_str(wv.shape()));

  Tensor out = Tensor::zeros(Shape{c, n});
  for (std::size_t pp = 0; pp < p; ++pp)
    for (std::size_t rr = 0; rr < r; ++rr) {
      const double* srow = sv.data() + (pp * r + rr) * c;
      const double* wrow = wv.data() + (pp * r + rr) * n;
      const double* arow = av.data() + pp * n;
      for (std::size_t cc = 0; cc < c; ++cc) {
        const double sval = srow[cc];
        if (sval == 0.0) continue;
        double* orow = out.data() + cc * n;
        for (std::size_t nn = 0; nn < n; ++nn) orow[nn] += arow[nn] * wrow[nn] * sval;
      }
    }

  return t.make(std::move(out), {a, s, w},
                [pa = a.id, psp = s.id, pw = w.id, p, r, c, n](Tape& t, int self) {
                  const Tensor& g = t.grad(self);   // [C,N]
                  const Tensor& av = t.value(pa);
                  const Tensor& sv = t.value(psp);
                  const Tensor& wv = t.value(pw);
                  // m[p,r,n] = sum_c g[c,n] S[p,r,c] is shared by dA and dw.
                  Tensor m = Tensor::zeros(Shape{p, r, n});
                  for (std::size_t pp = 0; pp < p; ++pp)
                    for (std::size_t rr = 0; rr < r; ++rr) {
                      double* mrow = m.data() + (pp * r + rr) * n;
                      const double* srow = sv.data() + (pp * r + rr) * c;
                      for (std::size_t cc = 0; cc < c; ++cc) {
                        const double sval = srow[cc];
                        if (sval == 0.0) continue;
                        const double* grow = g.data() + cc * n;
                        for (std::size_t nn = 0; nn < n; ++nn) mrow[nn] += sval * grow[nn];
                      }
                    }
                  if (t.tracked(pa)) {
                    Tensor ga = Tensor::zeros(Shape{p, n});
                    for (std::size_t pp = 0; pp < p; ++pp)
                      for (std::size_t rr = 0; rr < r; ++rr) {
                        const double* mrow = m.data() + (pp * r + rr) * n;
                        const double* wrow = wv.data() + (pp * r + rr) * n;
                        double* garow = ga.data() + pp * n;
                        for (std::size_t nn = 0; nn < n; ++nn) garow[nn] += wrow[nn] * mrow[nn];
                      }
                    t.add_grad(pa, std::move(ga));
                  }
                  if (t.tracked(pw)) {
                    Tensor gw(Shape{p, r, n});
                    for (std::size_t pp = 0; pp < p; ++pp) {
                      const double* arow = av.data() + pp * n;
                      for (std::size_t rr = 0; rr < r; ++rr) {
                        const double* mrow = m.data() + (pp * r + rr) * n;
                        double* gwrow = gw.data() + (pp * r + rr) * n;
                        for (std::size_t nn = 0; nn < n; ++nn) gwrow[nn] = arow[nn] * mrow[nn];
                      }
                    }
                    t.add_grad(pw, std::move(gw));
                  }
                  if (t.tracked(psp)) {
                    Tensor gs = Tensor::zeros(Shape{p, r, c});
                    for (std::size_t pp = 0; pp < p; ++pp) {
                      const double* arow = av.data() + pp * n;
                      for (std::size_t rr = 0; rr < r; ++rr) {
                        const double* wrow = wv.data() + (pp * r + rr) * n;
                        double* gsrow = gs.data() + (pp * r + rr) * c;
                        for (std::size_t cc = 0; cc < c; ++cc) {
                          const double* grow = g.data() + cc * n;
                          double acc = 0;
                          for (std::size_t nn = 0; nn < n; ++nn)
                            acc += grow[nn] * arow[nn] * wrow[nn];
                          gsrow[cc] = acc;
                        }
                      }
                    }
                    t.add_grad(psp, std::move(gs));
                  }
                });
}

double spectral_angle(const double* a, const double* b, std::size_t n) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("spectral_angle: zero-norm vector");
  double u = dot / (std::sqrt(na) * std::sqrt(nb));
  u = std::clamp(u, -1.0, 1.0);
  return std::acos(u);
}

double spectral_angle(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel())
    throw std::invalid_argument("spectral_angle: length mismatch");
  return spectral_angle(a.data(), b.data(), a.numel());
}

Var mean_spectral_angle(const Tensor& ref, Var recon) {
  Tape& t = *recon.tape;
  const Tensor& rv = recon.value();
  if (ref.ndim() != 2 || rv.ndim() != 2 || ref.shape() != rv.shape())
    throw std::invalid_argument("mean_spectral_angle: ref and recon must both be [C,N]");
  const std::size_t c = ref.dim(0), n = ref.dim(1);
  constexpr double kClamp = 1.0 - 1e-12;

  double total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t i = 0; i < c; ++i) {
      const double u = ref[i * n + j], v = rv[i * n + j];
      dot += u * v;
      nu += u * u;
      nv += v * v;
    }
    if (nu == 0.0 || nv == 0.0) {
      total += kPi / 2.0;  // undefined angle: fixed contribution, no gradient
      continue;
    }
    const double cosv = std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
    total += std::acos(cosv);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));

  Tensor ref_copy = ref;  // keep alive inside the closure
  return t.make(std::move(out), {recon},
                [pr = recon.id, ref = std::move(ref_copy), c, n, kClamp](Tape& t, int self) {
                  const double gscale = t.grad(self)[0] / static_cast<double>(n);
                  const Tensor& rv = t.value(pr);
                  Tensor gr = Tensor::zeros(Shape{c, n});
                  for (std::size_t j = 0; j < n; ++j) {
                    double dot = 0, nu = 0, nv = 0;
                    for (std::size_t i = 0; i < c; ++i) {
                      const double u = ref[i * n + j], v = rv[i * n + j];
                      dot += u * v;
                      nu += u * u;
                      nv += v * v;
                    }
                    if (nu == 0.0 || nv == 0.0) continue;
                    const double ru = std::sqrt(nu), rvn = std::sqrt(nv);
                    const double cosv = std::clamp(dot / (ru * rvn), -1.0, 1.0);
                    // acos has an infinite slope at |cos| = 1; bound the factor
                    // so collinear pixels push a large finite gradient instead.
                    const double c2 = std::min(cosv * cosv, kClamp * kClamp);
                    const double dacos = -1.0 / std::sqrt(1.0 - c2);
                    for (std::size_t i = 0; i < c; ++i) {
                      const double u = ref[i * n + j], v = rv[i * n + j];
                      const double dcos_dv = u / (ru * rvn) - cosv * v / nv;
                      gr[i * n + j] = gscale * dacos * dcos_dv;
                    }
                  }
                  t.add_grad(pr, std::move(gr));
                });
}

double mean_spectral_angle_value(const Tensor& ref, const Tensor& recon) {
  Tape t;
  Var v = t.constant(recon);
  return mean_spectral_angle(ref, v).value()[0];
}

Tensor spectral_angle_matrix(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("spectral_angle_matrix: need [P,C] and [Q,C]");
  const std::size_t p = a.dim(0), q = b.dim(0), c = a.dim(1);
  Tensor m(Shape{p, q});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j)
      m[i * q + j] = spectral_angle(a.data() + i * c, b.data() + j * c, c);
  return m;
}

}  // namespace ssmix
