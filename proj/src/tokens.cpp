#include "ssmix/tokens.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace ssmix {

void update_temporal_abundance(AbundanceState& st, const Tensor& a_t, double gamma_t) {
  if (a_t.ndim() != 2) throw std::invalid_argument("update_temporal_abundance: A must be [P,N]");
  if (!st.initialized) {
    st.ema = a_t;
    st.blended = a_t;
    st.initialized = true;
    st.epochs_applied = 1;
    return;
  }
  if (!st.ema.same_shape(a_t))
    throw std::invalid_argument("update_temporal_abundance: abundance shape changed");
  Tensor blended(a_t.shape());
  for (std::size_t i = 0; i < a_t.numel(); ++i)
    blended[i] = (1.0 - gamma_t) * a_t[i] + gamma_t * st.ema[i];
  for (std::size_t i = 0; i < a_t.numel(); ++i)
    st.ema[i] = st.tau * st.ema[i] + (1.0 - st.tau) * a_t[i];
  st.blended = std::move(blended);
  ++st.epochs_applied;
}

Tensor peek_temporal_abundance(const AbundanceState& st, const Tensor& a_t, double gamma_t) {
  if (!st.initialized) return a_t;
  if (!st.ema.same_shape(a_t))
    throw std::invalid_argument("peek_temporal_abundance: abundance shape changed");
  Tensor blended(a_t.shape());
  for (std::size_t i = 0; i < a_t.numel(); ++i)
    blended[i] = (1.0 - gamma_t) * a_t[i] + gamma_t * st.ema[i];
  return blended;
}

double temporal_gamma(std::size_t epoch) {
  return std::min(0.5, static_cast<double>(epoch) / 100.0);
}

std::size_t token_budget(const double* plane, std::size_t n, double lambda, double alpha,
                         double beta) {
  if (n == 0) return 0;
  double mx = plane[0], sum = plane[0];
  for (std::size_t i = 1; i < n; ++i) {
    mx = std::max(mx, plane[i]);
    sum += plane[i];
  }
  const double mean = sum / static_cast<double>(n);
  const double raw = lambda * (static_cast<double>(n) * (alpha * mx + beta * mean));
  if (raw <= 0.0) return 0;
  // The nudge absorbs double rounding: exact-arithmetic integers (e.g. the
  // 0.1*10000*0.44 = 440 case evaluates to 439.9999... in doubles) truncate
  // to the intended value.
  const std::size_t k = static_cast<std::size_t>(std::trunc(raw + 1e-9));
  return std::min(k, n);
}

std::size_t TokenPlan::scanned_tokens() const {
  std::size_t total = unselected_scan.size();
  for (const auto& s : selected) total += s.size();
  return total;
}

std::vector<std::uint32_t> TokenPlan::coverage_counts() const {
  std::vector<std::uint32_t> counts(height * width, 0);
  for (const auto& s : selected)
    for (int idx : s) ++counts[static_cast<std::size_t>(idx)];
  for (int idx : unselected_scan) ++counts[static_cast<std::size_t>(idx)];
  return counts;
}

TokenPlan select_tokens(const Tensor& a_temp, std::size_t height, std::size_t width,
                        double lambda, double alpha, double beta) {
  if (a_temp.ndim() != 2)
    throw std::invalid_argument("select_tokens: abundance must be [P,N]");
  const std::size_t p = a_temp.dim(0), n = a_temp.dim(1);
  if (n != height * width)
    throw std::invalid_argument("select_tokens: pixel count does not match the grid");

  TokenPlan plan;
  plan.height = height;
  plan.width = width;
  plan.lambda = lambda;
  plan.alpha = alpha;
  plan.beta = beta;
  plan.budgets.resize(p);
  plan.selected.resize(p);

  std::vector<std::uint8_t> in_any(n, 0);
  std::vector<int> order(n);
  for (std::size_t pp = 0; pp < p; ++pp) {
    const double* plane = a_temp.data() + pp * n;
    const std::size_t k = token_budget(plane, n, lambda, alpha, beta);
    plan.budgets[pp] = k;
    if (k == 0) continue;
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    // Total order: larger abundance first, ascending pixel index on ties.
    std::sort(order.begin(), order.end(), [plane](int a, int b) {
      if (plane[a] != plane[b]) return plane[a] > plane[b];
      return a < b;
    });
    plan.selected[pp].assign(order.begin(), order.begin() + static_cast<long>(k));
    for (int idx : plan.selected[pp]) in_any[static_cast<std::size_t>(idx)] = 1;
  }

  for (std::size_t i = 0; i < n; ++i)
    if (!in_any[i]) plan.unselected.push_back(static_cast<int>(i));

  // Sparse pass over the leftovers: uniform stride subsample capped at the
  // image-level budget Int(lambda * H * W).
  const std::size_t cap = static_cast<std::size_t>(
      std::trunc(lambda * static_cast<double>(n) + 1e-9));
  const std::size_t m = plan.unselected.size();
  if (m > 0 && cap > 0) {
    if (m <= cap) {
      plan.unselected_scan = plan.unselected;
    } else {
      const double stride = static_cast<double>(m) / static_cast<double>(cap);
      plan.unselected_scan.reserve(cap);
      for (std::size_t k = 0; k < cap; ++k) {
        const std::size_t pos = static_cast<std::size_t>(
            std::trunc(stride * static_cast<double>(k)));
        plan.unselected_scan.push_back(plan.unselected[std::min(pos, m - 1)]);
      }
      // The stride walk is monotone, so the subsample stays ascending.
    }
  }
  return plan;
}

TokenPlan full_raster_plan(std::size_t clusters, std::size_t height, std::size_t width) {
  TokenPlan plan;
  plan.height = height;
  plan.width = width;
  plan.full_raster = true;
  const std::size_t n = height * width;
  std::vector<int> raster(n);
  for (std::size_t i = 0; i < n; ++i) raster[i] = static_cast<int>(i);
  plan.budgets.assign(clusters, n);
  plan.selected.assign(clusters, raster);
  plan.unselected = raster;
  plan.unselected_scan = std::move(raster);
  return plan;
}

void dump_plan_jsonl(const TokenPlan& plan, std::ostream& os) {
  auto write_indices = [&os](const std::vector<int>& idx) {
    os << "[";
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (i) os << ",";
      os << idx[i];
    }
    os << "]";
  };
  for (std::size_t p = 0; p < plan.selected.size(); ++p) {
    os << "{\"cluster\":" << p << ",\"budget\":" << plan.budgets[p] << ",\"indices\":";
    write_indices(plan.selected[p]);
    os << "}\n";
  }
  os << "{\"cluster\":-1,\"budget\":" << plan.unselected_scan.size() << ",\"indices\":";
  write_indices(plan.unselected_scan);
  os << "}\n";
}

}  // namespace ssmix
