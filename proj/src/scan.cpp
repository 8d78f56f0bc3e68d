#include "ssmix/scan.hpp"

#include <cmath>
#include <stdexcept>

namespace ssmix {

namespace {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ScanBlock make_scan_block(nn::ParamStore& ps, const std::string& name, std::size_t dim,
                          std::size_t state, int group, Rng& rng) {
  if (dim == 0 || state == 0)
    throw std::invalid_argument("make_scan_block: dim and state must be positive");
  ScanBlock b;
  b.dim = dim;
  b.state = state;
  // Decay spectrum a = -1..-s as in diagonal SSM practice.
  Tensor alog(Shape{dim, state});
  for (std::size_t d = 0; d < dim; ++d)
    for (std::size_t n = 0; n < state; ++n)
      alog[d * state + n] = std::log(static_cast<double>(n + 1));
  b.a_log = &ps.add(name + ".a_log", std::move(alog), group);
  b.delta_w = &ps.add(name + ".delta_w",
                      nn::glorot_uniform(Shape{dim}, dim, 1, rng), group);
  // Bias chosen so a fresh block starts with step size softplus(b) ~ 0.05.
  b.delta_b = &ps.add(name + ".delta_b",
                      Tensor(Shape{1}, std::log(std::expm1(0.05))), group);
  b.b_proj = &ps.add(name + ".b_proj",
                     nn::glorot_uniform(Shape{dim, state}, dim, state, rng), group);
  b.c_proj = &ps.add(name + ".c_proj",
                     nn::glorot_uniform(Shape{dim, state}, dim, state, rng), group);
  b.skip = &ps.add(name + ".skip", Tensor(Shape{dim}, 1.0), group);
  return b;
}

ScanBlockVars bind_scan_block(Tape& t, const ScanBlock& b) {
  ScanBlockVars v;
  v.a_log = t.param(*b.a_log);
  v.delta_w = t.param(*b.delta_w);
  v.delta_b = t.param(*b.delta_b);
  v.b_proj = t.param(*b.b_proj);
  v.c_proj = t.param(*b.c_proj);
  v.skip = t.param(*b.skip);
  v.dim = b.dim;
  v.state = b.state;
  return v;
}

Var selective_scan(Var x, const ScanBlockVars& p) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (xv.ndim() != 3)
    throw std::invalid_argument("selective_scan: input must be [B,L,d]");
  const std::size_t B = xv.dim(0), L = xv.dim(1), d = xv.dim(2), s = p.state;
  if (d != p.dim)
    throw std::invalid_argument("selective_scan: token dim " + std::to_string(d) +
                                " does not match block dim " + std::to_string(p.dim));

  const Tensor& alog = p.a_log.value();
  const Tensor& wd = p.delta_w.value();
  const double bd = p.delta_b.value()[0];
  const Tensor& wb = p.b_proj.value();
  const Tensor& wc = p.c_proj.value();
  const Tensor& skip = p.skip.value();

  Tensor a(Shape{d, s});
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = -std::exp(alog[i]);

  // Saved intermediates for backpropagation through time.
  Tensor hs(Shape{B, L, d, s});
  Tensor deltas(Shape{B, L});
  Tensor dls(Shape{B, L});
  Tensor bts(Shape{B, L, s});
  Tensor cts(Shape{B, L, s});
  Tensor y(Shape{B, L, d});

  std::vector<double> h(d * s);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::size_t tt = 0; tt < L; ++tt) {
      const double* xt = xv.data() + (b * L + tt) * d;
      double dl = bd;
      for (std::size_t ch = 0; ch < d; ++ch) dl += wd[ch] * xt[ch];
      const double delta = softplus(dl);
      dls[b * L + tt] = dl;
      deltas[b * L + tt] = delta;

      double* bt = bts.data() + (b * L + tt) * s;
      double* ct = cts.data() + (b * L + tt) * s;
      for (std::size_t n = 0; n < s; ++n) {
        double sb = 0, sc = 0;
        for (std::size_t ch = 0; ch < d; ++ch) {
          sb += xt[ch] * wb[ch * s + n];
          sc += xt[ch] * wc[ch * s + n];
        }
        bt[n] = sb;
        ct[n] = sc;
      }

      double* hsave = hs.data() + ((b * L + tt) * d) * s;
      double* yt = y.data() + (b * L + tt) * d;
      for (std::size_t ch = 0; ch < d; ++ch) {
        double acc = 0;
        for (std::size_t n = 0; n < s; ++n) {
          const double trans = std::exp(delta * a[ch * s + n]);
          const double hn = trans * h[ch * s + n] + delta * bt[n] * xt[ch];
          h[ch * s + n] = hn;
          hsave[ch * s + n] = hn;
          acc += ct[n] * hn;
        }
        yt[ch] = acc + skip[ch] * xt[ch];
      }
    }
  }

  return t.make(
      std::move(y), {x, p.a_log, p.delta_w, p.delta_b, p.b_proj, p.c_proj, p.skip},
      [px = x.id, pa = p.a_log.id, pwd = p.delta_w.id, pbd = p.delta_b.id,
       pwb = p.b_proj.id, pwc = p.c_proj.id, pskip = p.skip.id, B, L, d, s,
       a = std::move(a), hs = std::move(hs), deltas = std::move(deltas),
       dls = std::move(dls), bts = std::move(bts), cts = std::move(cts)](Tape& t,
                                                                         int self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(px);
        const Tensor& alog = t.value(pa);
        const Tensor& wd = t.value(pwd);
        const Tensor& wb = t.value(pwb);
        const Tensor& wc = t.value(pwc);
        const Tensor& skip = t.value(pskip);

        Tensor dx = Tensor::zeros(Shape{B, L, d});
        Tensor dalog = Tensor::zeros(Shape{d, s});
        Tensor dwd = Tensor::zeros(Shape{d});
        Tensor dbd = Tensor::zeros(Shape{1});
        Tensor dwb = Tensor::zeros(Shape{d, s});
        Tensor dwc = Tensor::zeros(Shape{d, s});
        Tensor dskip = Tensor::zeros(Shape{d});

        std::vector<double> dh(d * s);
        std::vector<double> dbt(s), dct(s);
        for (std::size_t b = 0; b < B; ++b) {
          std::fill(dh.begin(), dh.end(), 0.0);
          for (std::size_t tt = L; tt-- > 0;) {
            const double* gt = g.data() + (b * L + tt) * d;
            const double* xt = xv.data() + (b * L + tt) * d;
            const double* ht = hs.data() + ((b * L + tt) * d) * s;
            const double* hprev =
                tt > 0 ? hs.data() + ((b * L + tt - 1) * d) * s : nullptr;
            const double* bt = bts.data() + (b * L + tt) * s;
            const double* ct = cts.data() + (b * L + tt) * s;
            const double delta = deltas[b * L + tt];

            // y_t contributions.
            std::fill(dct.begin(), dct.end(), 0.0);
            for (std::size_t ch = 0; ch < d; ++ch) {
              const double gch = gt[ch];
              dskip[ch] += gch * xt[ch];
              dx[(b * L + tt) * d + ch] += skip[ch] * gch;
              for (std::size_t n = 0; n < s; ++n) {
                dh[ch * s + n] += gch * ct[n];
                dct[n] += gch * ht[ch * s + n];
              }
            }

            // Recurrence h_t = exp(delta a) h_{t-1} + delta B_t x_t.
            double ddelta = 0;
            std::fill(dbt.begin(), dbt.end(), 0.0);
            for (std::size_t ch = 0; ch < d; ++ch) {
              double dxr = 0;
              for (std::size_t n = 0; n < s; ++n) {
                const double dhn = dh[ch * s + n];
                const double an = a[ch * s + n];
                const double trans = std::exp(delta * an);
                const double hp = hprev ? hprev[ch * s + n] : 0.0;
                ddelta += dhn * (trans * an * hp + bt[n] * xt[ch]);
                dbt[n] += dhn * delta * xt[ch];
                dxr += dhn * delta * bt[n];
                dalog[ch * s + n] += dhn * trans * delta * hp * an;
                dh[ch * s + n] = dhn * trans;  // flows to h_{t-1}
              }
              dx[(b * L + tt) * d + ch] += dxr;
            }

            // delta = softplus(dl), dl = wd.x + bd.
            const double ddl = ddelta * sigmoid(dls[b * L + tt]);
            dbd[0] += ddl;
            for (std::size_t ch = 0; ch < d; ++ch) {
              dwd[ch] += ddl * xt[ch];
              dx[(b * L + tt) * d + ch] += ddl * wd[ch];
            }

            // B_t = x^T wb, C_t = x^T wc.
            for (std::size_t ch = 0; ch < d; ++ch) {
              double accx = 0;
              for (std::size_t n = 0; n < s; ++n) {
                dwb[ch * s + n] += xt[ch] * dbt[n];
                dwc[ch * s + n] += xt[ch] * dct[n];
                accx += dbt[n] * wb[ch * s + n] + dct[n] * wc[ch * s + n];
              }
              dx[(b * L + tt) * d + ch] += accx;
            }
          }
        }

        (void)alog;
        if (t.tracked(px)) t.add_grad(px, std::move(dx));
        if (t.tracked(pa)) t.add_grad(pa, std::move(dalog));
        if (t.tracked(pwd)) t.add_grad(pwd, std::move(dwd));
        if (t.tracked(pbd)) t.add_grad(pbd, std::move(dbd));
        if (t.tracked(pwb)) t.add_grad(pwb, std::move(dwb));
        if (t.tracked(pwc)) t.add_grad(pwc, std::move(dwc));
        if (t.tracked(pskip)) t.add_grad(pskip, std::move(dskip));
      });
}

}  // namespace ssmix
