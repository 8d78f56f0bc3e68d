#pragma once

#include <cstdint>
#include <string>

#include "ssmix/nn.hpp"
#include "ssmix/tape.hpp"
#include "ssmix/tensor.hpp"

namespace ssmix {

// Flavours of the positional encoding injected before the gates. Both carry
// normalised coordinates x = col/(W-1), y = row/(H-1) (0 when the axis is a
// single pixel wide).
enum class PosFlavor {
  kUnmix,     // [x, y, (sin 2πx + cos 2πy)/2]
  kClassify,  // [sin 2πx, cos 2πy, (x+y)/2]
};

// Returns the [3, H*W] positional code matrix for a given flavour.
Tensor positional_codes(std::size_t height, std::size_t width, PosFlavor flavor);

// Multiplicative positional gate: out = tanh(Q ⊙ K) ⊙ V + F with
//   Q = Linear([F; pos]) mapping D+3 -> D channels,
//   K, V = learnable linear reductions broadcast back over the reduced axis.
// The unmix flavour reduces K over image rows and V over image columns; the
// classify flavour reduces both over the channel axis. With all projection
// parameters at zero the gate is exactly the identity.
struct PositionalGate {
  PosFlavor flavor = PosFlavor::kUnmix;
  std::size_t dim = 0, height = 0, width = 0;
  nn::Linear q;            // [D, D+3]
  nn::Param* k_w = nullptr;  // [H] (unmix) or [D] (classify)
  nn::Param* k_b = nullptr;  // [1]
  nn::Param* v_w = nullptr;  // [W] (unmix) or [D] (classify)
  nn::Param* v_b = nullptr;  // [1]

  // f is [D, N]; pos is the constant code matrix for the same grid.
  Var operator()(Tape& t, Var f, const Tensor& pos) const;
};

PositionalGate make_positional_gate(nn::ParamStore& ps, const std::string& name,
                                    PosFlavor flavor, std::size_t dim, std::size_t height,
                                    std::size_t width, int group, Rng& rng);

// Three stacked 1x1 convolutions (BN+ReLU after the first two) shrinking
// D -> D -> D/2 -> P channels.
struct AbundanceHead {
  nn::Linear c1, c2, c3;
  nn::BatchNorm bn1, bn2;
  Var operator()(Tape& t, Var f) const;
};

AbundanceHead make_abundance_head(nn::ParamStore& ps, const std::string& name,
                                  std::size_t dim, std::size_t endmembers, int group,
                                  Rng& rng);

// Per-pixel L1 normalisation of channel magnitudes (x is [P, N]):
// out[p,n] = |x[p,n]| / sum_q |x[q,n]|. A pixel whose channels are all zero
// falls back to the uniform 1/P column and contributes no gradient.
Var abs_normalize_cols(Var x);

// Per-pixel convex weights over R spectrum variants, derived from the
// abundance features by a 1x1 linear to P*R channels and a softmax over R.
struct VariabilityHead {
  std::size_t endmembers = 0, variants = 0;
  nn::Linear proj;  // [P*R, P]
  Var operator()(Tape& t, Var f_abu) const;  // [P,N] -> [P,R,N]
};

VariabilityHead make_variability_head(nn::ParamStore& ps, const std::string& name,
                                      std::size_t endmembers, std::size_t variants,
                                      int group, Rng& rng);

// Trainable endmember bank: R spectrum variants per endmember, initialised as
// R identical copies of the rows given at construction (typically the VCA
// pick). Spectra are clamped non-negative when used.
struct EndmemberBank {
  std::size_t endmembers = 0, variants = 0, bands = 0;
  nn::Param* spectra = nullptr;  // [P, R, C]

  // Non-negative spectra as a tape node.
  Var clamped(Tape& t) const;
  // Mean over variants of the clamped spectra; plain tensor for metrics.
  Tensor mean_spectra() const;
};

EndmemberBank make_endmember_bank(nn::ParamStore& ps, const std::string& name,
                                  const Tensor& initial /* [P, C] */,
                                  std::size_t variants, int group, bool trainable);

// Mixture reconstruction with per-pixel variant weights:
//   out[c,n] = sum_p A[p,n] * sum_r w[p,r,n] * S[p,r,c].
// A is [P,N], S is [P,R,C], w is [P,R,N]; result is [C,N]. With R = 1 this
// reduces exactly to the linear mixing model S^T A.
Var reconstruct_mixture(Var a, Var s, Var w);

// Spectral angle in radians between two vectors; throws on zero norm.
double spectral_angle(const double* a, const double* b, std::size_t n);
double spectral_angle(const Tensor& a, const Tensor& b);

// Mean spectral angle between matching columns of ref and recon (both [C,N]).
// Columns whose reconstruction has zero norm contribute pi/2 without gradient.
Var mean_spectral_angle(const Tensor& ref, Var recon);
double mean_spectral_angle_value(const Tensor& ref, const Tensor& recon);

// Pairwise angles between rows of two spectra matrices: [P,C] x [Q,C] -> [P,Q].
Tensor spectral_angle_matrix(const Tensor& a, const Tensor& b);

}  // namespace ssmix
