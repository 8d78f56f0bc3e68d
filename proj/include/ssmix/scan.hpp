#pragma once

#include <string>

#include "ssmix/nn.hpp"
#include "ssmix/tape.hpp"

namespace ssmix {

// Minimal diagonal selective state-space recurrence over token sequences.
// For each batch row and time step (x_t is the d-channel token):
//   delta_t = softplus(delta_w . x_t + delta_b)            (scalar per token)
//   B_t = x_t^T b_proj,  C_t = x_t^T c_proj                (s-vectors)
//   a[ch,n] = -exp(a_log[ch,n])                            (stable: a < 0)
//   h_t[ch,n] = exp(delta_t * a[ch,n]) * h_{t-1}[ch,n] + delta_t * B_t[n] * x_t[ch]
//   y_t[ch] = sum_n C_t[n] * h_t[ch,n] + skip[ch] * x_t[ch]
// The recurrence is strictly causal; h_{-1} = 0.
struct ScanBlock {
  std::size_t dim = 0;    // channels per token
  std::size_t state = 0;  // state size s
  nn::Param* a_log = nullptr;    // [d, s]
  nn::Param* delta_w = nullptr;  // [d]
  nn::Param* delta_b = nullptr;  // [1]
  nn::Param* b_proj = nullptr;   // [d, s]
  nn::Param* c_proj = nullptr;   // [d, s]
  nn::Param* skip = nullptr;     // [d]
};

ScanBlock make_scan_block(nn::ParamStore& ps, const std::string& name, std::size_t dim,
                          std::size_t state, int group, Rng& rng);

// Tape bindings of one block's parameters.
struct ScanBlockVars {
  Var a_log, delta_w, delta_b, b_proj, c_proj, skip;
  std::size_t dim = 0, state = 0;
};
ScanBlockVars bind_scan_block(Tape& t, const ScanBlock& b);

// x is [B, L, d]; the result has the same shape. Differentiable with respect
// to x and every block parameter (backpropagation through time).
Var selective_scan(Var x, const ScanBlockVars& p);

}  // namespace ssmix
