#include "ssmix/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ssmix/unmixing.hpp"

namespace ssmix {

std::vector<std::int32_t> predict_labels(const Tensor& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("predict_labels: scores must be [K,N]");
  const std::size_t k = logits.dim(0), n = logits.dim(1);
  std::vector<std::int32_t> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i) {
      if (logits.at({i, j}) > logits.at({best, j})) best = i;
    }
    out[j] = static_cast<std::int32_t>(best + 1);
  }
  return out;
}

Confusion confusion_matrix(const std::vector<std::int32_t>& truth,
                           const std::vector<std::int32_t>& pred,
                           const std::vector<std::uint8_t>& mask,
                           std::size_t num_classes) {
  if (truth.size() != pred.size() || truth.size() != mask.size()) {
    throw std::invalid_argument("confusion_matrix: length mismatch");
  }
  Confusion c;
  c.num_classes = num_classes;
  c.counts.assign(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!mask[i] || truth[i] == 0) continue;
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(pred[i]);
    if (t > num_classes || p == 0 || p > num_classes) {
      throw std::invalid_argument("confusion_matrix: label outside 1..K");
    }
    ++c.counts[(t - 1) * num_classes + (p - 1)];
    ++c.total;
  }
  return c;
}

double overall_accuracy(const Confusion& c) {
  if (c.total == 0) throw std::invalid_argument("overall_accuracy: empty confusion");
  std::uint64_t diag = 0;
  for (std::size_t i = 0; i < c.num_classes; ++i) diag += c.at(i, i);
  return static_cast<double>(diag) / static_cast<double>(c.total);
}

double average_accuracy(const Confusion& c) {
  if (c.total == 0) throw std::invalid_argument("average_accuracy: empty confusion");
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    std::uint64_t row = 0;
    for (std::size_t j = 0; j < c.num_classes; ++j) row += c.at(i, j);
    if (row == 0) continue;
    sum += static_cast<double>(c.at(i, i)) / static_cast<double>(row);
    ++present;
  }
  return sum / static_cast<double>(present);
}

double kappa(const Confusion& c) {
  if (c.total == 0) throw std::invalid_argument("kappa: empty confusion");
  const double n = static_cast<double>(c.total);
  double po = overall_accuracy(c);
  double pe = 0.0;
  for (std::size_t i = 0; i < c.num_classes; ++i) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c.num_classes; ++j) {
      row += c.at(i, j);
      col += c.at(j, i);
    }
    pe += (static_cast<double>(row) / n) * (static_cast<double>(col) / n);
  }
  if (1.0 - pe < 1e-15) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

std::vector<std::size_t> hungarian_min_assign(const Tensor& cost) {
  if (cost.ndim() != 2 || cost.dim(0) != cost.dim(1)) {
    throw std::invalid_argument("hungarian_min_assign: cost must be square");
  }
  const std::size_t n = cost.dim(0);
  // Potentials-based shortest augmenting path (rows/cols are 1-based inside;
  // way[j] remembers the predecessor column on the alternating path).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost.at({i0 - 1, j - 1}) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) assign[p[j] - 1] = j - 1;
  }
  return assign;
}

UnmixMetrics unmixing_metrics(const Tensor& true_endmembers, const Tensor& est_endmembers,
                              const Tensor& true_abundance, const Tensor& est_abundance) {
  if (true_endmembers.ndim() != 2 || est_endmembers.shape() != true_endmembers.shape()) {
    throw std::invalid_argument("unmixing_metrics: endmember shapes must match [P,C]");
  }
  if (true_abundance.ndim() != 2 || est_abundance.shape() != true_abundance.shape() ||
      true_abundance.dim(0) != true_endmembers.dim(0)) {
    throw std::invalid_argument("unmixing_metrics: abundance shapes must match [P,N]");
  }
  const std::size_t P = true_endmembers.dim(0), N = true_abundance.dim(1);

  UnmixMetrics m;
  Tensor angles = spectral_angle_matrix(true_endmembers, est_endmembers);
  m.assignment = hungarian_min_assign(angles);

  double sad = 0.0;
  for (std::size_t p = 0; p < P; ++p) sad += angles.at({p, m.assignment[p]});
  m.mean_sad = sad / static_cast<double>(P);

  double se = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t q = m.assignment[p];
    for (std::size_t n = 0; n < N; ++n) {
      const double d = true_abundance.at({p, n}) - est_abundance.at({q, n});
      se += d * d;
    }
  }
  m.abundance_rmse = std::sqrt(se / static_cast<double>(P * N));
  return m;
}

}  // namespace ssmix
