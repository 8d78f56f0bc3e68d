#pragma once

#include <cstdint>
#include <vector>

#include "ssmix/tensor.hpp"

namespace ssmix {

// Per-pixel argmax class prediction from [K, N] scores; ties resolve to the
// lowest class id. Returned labels are one-based to match label maps.
std::vector<std::int32_t> predict_labels(const Tensor& logits);

// counts[i][j] = pixels of true class i+1 predicted as class j+1, over the
// masked pixels only. Unlabelled pixels (label 0) never count.
struct Confusion {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> counts;  // row-major [K, K]
  std::uint64_t total = 0;

  std::uint64_t at(std::size_t true_c, std::size_t pred_c) const {
    return counts[true_c * num_classes + pred_c];
  }
};

Confusion confusion_matrix(const std::vector<std::int32_t>& truth,
                           const std::vector<std::int32_t>& pred,
                           const std::vector<std::uint8_t>& mask,
                           std::size_t num_classes);

// Fraction of masked pixels classified correctly. Throws when the confusion
// holds no pixels.
double overall_accuracy(const Confusion& c);

// Mean of per-class recalls over the classes that actually appear.
double average_accuracy(const Confusion& c);

// Cohen's kappa: (po - pe) / (1 - pe); defined as 1 when the expected
// agreement reaches 1 with perfect observed agreement, else 0 at that pole.
double kappa(const Confusion& c);

// Minimum-cost perfect assignment on a square cost matrix [n, n]
// (O(n^3) potentials + augmenting paths). result[row] = assigned column.
std::vector<std::size_t> hungarian_min_assign(const Tensor& cost);

// Abundance / endmember recovery metrics under the best endmember matching:
// the assignment minimising total spectral angle between true and estimated
// endmember rows decides which estimated row plays which true endmember.
struct UnmixMetrics {
  double mean_sad = 0.0;        // mean matched endmember angle (radians)
  double abundance_rmse = 0.0;  // RMSE over all matched abundance entries
  std::vector<std::size_t> assignment;  // true row -> estimated row
};

UnmixMetrics unmixing_metrics(const Tensor& true_endmembers /* [P, C] */,
                              const Tensor& est_endmembers /* [P, C] */,
                              const Tensor& true_abundance /* [P, N] */,
                              const Tensor& est_abundance /* [P, N] */);

}  // namespace ssmix
