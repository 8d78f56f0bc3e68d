#include "ssmix/mamba.hpp"

#include <stdexcept>

namespace ssmix {

ClusterScanSet make_cluster_scan_set(nn::ParamStore& ps, const std::string& name,
                                     std::size_t clusters, std::size_t dim,
                                     std::size_t state, int group, Rng& rng) {
  ClusterScanSet set;
  set.blocks.reserve(clusters + 1);
  for (std::size_t p = 0; p < clusters; ++p)
    set.blocks.push_back(
        make_scan_block(ps, name + ".c" + std::to_string(p), dim, state, group, rng));
  set.blocks.push_back(make_scan_block(ps, name + ".rest", dim, state, group, rng));
  return set;
}

namespace {

// Shared scatter/mean/residual wrapper around a per-sequence scan.
// run_scan(tape, tokens [K,D], block) -> [K,D].
template <typename RunScan>
Var clustered_pass(Tape& t, Var f, const TokenPlan& plan, const ClusterScanSet& set,
                   std::size_t* scanned, RunScan&& run_scan) {
  const Tensor& fv = f.value();
  if (fv.ndim() != 2) throw std::invalid_argument("cluster scan: features must be [D,N]");
  const std::size_t n = fv.dim(1);
  if (n != plan.height * plan.width)
    throw std::invalid_argument("cluster scan: plan grid does not match features");
  if (set.clusters() != plan.selected.size())
    throw std::invalid_argument("cluster scan: plan has " +
                                std::to_string(plan.selected.size()) + " clusters; block set has " +
                                std::to_string(set.clusters()));

  std::size_t total = 0;
  Var acc;  // invalid until the first scatter
  auto add_sequence = [&](const std::vector<int>& idx, const ScanBlock& block) {
    if (idx.empty()) return;
    total += idx.size();
    Var tokens = transpose2d(gather_cols(f, idx));  // [K, D]
    Var out = run_scan(t, tokens, block);           // [K, D]
    Var contribution = scatter_cols_sum(transpose2d(out), idx, n);
    acc = acc.valid() ? add(acc, contribution) : contribution;
  };

  for (std::size_t p = 0; p < plan.selected.size(); ++p)
    add_sequence(plan.selected[p], set.blocks[p]);
  add_sequence(plan.unselected_scan, set.blocks.back());

  if (scanned != nullptr) *scanned = total;
  if (!acc.valid()) return f;  // nothing scanned anywhere: identity

  // Mean over the sequences that wrote each pixel; untouched pixels keep 0
  // here and pass through via the residual.
  auto counts = plan.coverage_counts();
  Tensor inv(Shape{1, n});
  for (std::size_t i = 0; i < n; ++i)
    inv[i] = counts[i] > 0 ? 1.0 / static_cast<double>(counts[i]) : 0.0;
  Var mean = mul(acc, t.constant(std::move(inv)));
  return add(mean, f);
}

}  // namespace

Var cluster_scan_spatial(Tape& t, Var f, const TokenPlan& plan, const ClusterScanSet& set,
                         std::size_t* scanned) {
  const std::size_t d = f.value().dim(0);
  for (const ScanBlock& b : set.blocks)
    if (b.dim != d)
      throw std::invalid_argument("cluster_scan_spatial: block dim mismatch");
  return clustered_pass(t, f, plan, set, scanned,
                        [d](Tape& t, Var tokens, const ScanBlock& block) {
                          const std::size_t k = tokens.value().dim(0);
                          Var x3 = reshape(tokens, Shape{1, k, d});
                          Var y3 = selective_scan(x3, bind_scan_block(t, block));
                          return reshape(y3, Shape{k, d});
                        });
}

Var cluster_scan_spectral(Tape& t, Var f, const TokenPlan& plan, const ClusterScanSet& set,
                          std::size_t groups, std::size_t* scanned) {
  const std::size_t d = f.value().dim(0);
  if (groups == 0 || d % groups != 0)
    throw std::invalid_argument("cluster_scan_spectral: channel count " + std::to_string(d) +
                                " is not divisible into " + std::to_string(groups) + " groups");
  const std::size_t j = d / groups;
  for (const ScanBlock& b : set.blocks)
    if (b.dim != j)
      throw std::invalid_argument("cluster_scan_spectral: blocks must have dim D/groups");
  return clustered_pass(t, f, plan, set, scanned,
                        [groups, j, d](Tape& t, Var tokens, const ScanBlock& block) {
                          const std::size_t k = tokens.value().dim(0);
                          Var x3 = reshape(tokens, Shape{k, groups, j});
                          Var y3 = selective_scan(x3, bind_scan_block(t, block));
                          return reshape(y3, Shape{k, d});
                        });
}

}  // namespace ssmix
