#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ssmix/tensor.hpp"

namespace ssmix {

// Exponential moving average of abundance maps across training epochs,
// blended into a temporal abundance used for token budgeting:
//   blended_t = (1-gamma_t) * A_t + gamma_t * ema_{t-1}
//   ema_t     = tau * ema_{t-1} + (1-tau) * A_t        (ema_0 = A_0)
struct AbundanceState {
  double tau = 0.9;
  std::size_t epochs_applied = 0;
  bool initialized = false;
  Tensor ema;      // [P, N]
  Tensor blended;  // [P, N], result of the latest update/peek
};

// Advances the state by one epoch with the given blend weight gamma_t.
void update_temporal_abundance(AbundanceState& st, const Tensor& a_t, double gamma_t);

// Computes the blend against the stored EMA without mutating the state
// (used at evaluation time). Falls back to a_t when uninitialised.
Tensor peek_temporal_abundance(const AbundanceState& st, const Tensor& a_t, double gamma_t);

// Default schedule for the blend weight: ramps linearly, capped at 1/2.
double temporal_gamma(std::size_t epoch);

// Integer truncation of the token budget formula
//   K = Int(lambda * H*W * (alpha * max(plane) + beta * mean(plane))),
// with a tiny nudge so values that are integers in exact arithmetic do not
// truncate one short after double rounding.
std::size_t token_budget(const double* plane, std::size_t n, double lambda, double alpha,
                         double beta);

// Per-cluster token selection derived from the temporal abundance.
struct TokenPlan {
  std::size_t height = 0, width = 0;
  double lambda = 0.1, alpha = 0.3, beta = 0.7;
  std::vector<std::size_t> budgets;        // K_p per cluster
  std::vector<std::vector<int>> selected;  // per cluster: flat pixel indices,
                                           // descending abundance, ties by
                                           // ascending index
  std::vector<int> unselected;       // pixels in no cluster, ascending
  std::vector<int> unselected_scan;  // uniform stride subsample of the above
  bool full_raster = false;          // plan built by full_raster_plan

  std::size_t clusters() const { return budgets.size(); }
  std::size_t scanned_tokens() const;
  // Writes per pixel across selected clusters + the unselected sequence.
  std::vector<std::uint32_t> coverage_counts() const;
};

// Top-K_p pixels per abundance plane (duplicates across clusters allowed),
// plus the ordered unselected remainder and its stride subsample capped at
// Int(lambda*H*W) tokens.
TokenPlan select_tokens(const Tensor& a_temp /* [P, N] */, std::size_t height,
                        std::size_t width, double lambda, double alpha, double beta);

// Ablation plan: every cluster and the unselected slot get all H*W pixels in
// raster order.
TokenPlan full_raster_plan(std::size_t clusters, std::size_t height, std::size_t width);

// One JSON object per cluster: {"cluster":p,"budget":K,"indices":[...]}, then
// one for the unselected scan sequence with "cluster":-1.
void dump_plan_jsonl(const TokenPlan& plan, std::ostream& os);

}  // namespace ssmix
