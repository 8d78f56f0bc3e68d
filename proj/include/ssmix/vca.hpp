#pragma once

#include <cstdint>
#include <vector>

#include "ssmix/tensor.hpp"

namespace ssmix {

// Vertex component analysis: picks P pixels whose spectra are the extreme
// points of the data simplex. Deterministic given the seed (the random
// direction draws are the only stochastic part).
struct VcaResult {
  Tensor spectra;                    // [P, C], rows are original pixel spectra
  std::vector<std::size_t> indices;  // chosen pixel columns into the [C,N] input
  double snr_estimate_db = 0.0;
  bool projective_path = false;  // true: SNR was high enough for the
                                 // projective-projection branch
};

VcaResult vca(const Tensor& y /* [C,N] */, std::size_t num_endmembers,
              std::uint64_t seed);

}  // namespace ssmix
