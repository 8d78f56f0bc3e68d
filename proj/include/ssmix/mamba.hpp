#pragma once

#include <string>
#include <vector>

#include "ssmix/scan.hpp"
#include "ssmix/tokens.hpp"

namespace ssmix {

// One scan block per abundance cluster plus one for the unselected pixels.
struct ClusterScanSet {
  std::vector<ScanBlock> blocks;  // size clusters+1; last entry = unselected
  std::size_t clusters() const { return blocks.empty() ? 0 : blocks.size() - 1; }
};

ClusterScanSet make_cluster_scan_set(nn::ParamStore& ps, const std::string& name,
                                     std::size_t clusters, std::size_t dim,
                                     std::size_t state, int group, Rng& rng);

// Spatial pass: each cluster's selected pixels form one token sequence (in
// plan order); the unselected subsample forms one more. Every sequence runs
// through its own scan; outputs scatter back to pixels as the mean over all
// sequences that wrote a pixel, plus the residual input. Pixels no sequence
// touched pass through unchanged. `scanned` (if non-null) receives the total
// token count actually scanned.
Var cluster_scan_spatial(Tape& t, Var f /* [D,N] */, const TokenPlan& plan,
                         const ClusterScanSet& set, std::size_t* scanned = nullptr);

// Spectral pass: each token's channel vector is split into `groups` equal
// segments scanned as a short sequence (one batch row per token). Scatter and
// residual behave exactly like the spatial pass. Block dim must be D/groups.
Var cluster_scan_spectral(Tape& t, Var f /* [D,N] */, const TokenPlan& plan,
                          const ClusterScanSet& set, std::size_t groups,
                          std::size_t* scanned = nullptr);

}  // namespace ssmix
