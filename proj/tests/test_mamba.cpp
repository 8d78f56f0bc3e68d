#include "doctest.h"
#include "fd_check.hpp"
#include "ssmix/mamba.hpp"

#include <algorithm>
#include <cmath>

using namespace ssmix;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void randomize_store(nn::ParamStore& ps, std::uint64_t seed, double scale = 0.6) {
  Rng rng(seed);
  for (auto& p : ps.items()) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      p->value[i] = rng.uniform(-scale, scale);
    }
  }
}

// Mute a block: c_proj = 0 and skip = 0 force its scan output to zero.
void mute(ScanBlock& b) {
  b.c_proj->value.fill(0.0);
  b.skip->value.fill(0.0);
}

TokenPlan plan_of(std::vector<std::vector<int>> selected, std::vector<int> unsel_scan,
                  std::size_t h, std::size_t w) {
  TokenPlan plan;
  plan.height = h;
  plan.width = w;
  for (auto& s : selected) {
    plan.budgets.push_back(s.size());
    plan.selected.push_back(std::move(s));
  }
  plan.unselected_scan = std::move(unsel_scan);
  return plan;
}

// Runs one block over one pixel-index sequence by hand: gather columns of f
// into [1, K, D], scan, and return the per-token outputs.
Tensor scan_sequence_by_hand(const ScanBlock& block, const Tensor& f,
                             const std::vector<int>& seq) {
  const std::size_t D = f.dim(0), K = seq.size();
  Tensor x(Shape{1, K, D});
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < D; ++c) {
      x.at({0, k, c}) = f.at({c, static_cast<std::size_t>(seq[k])});
    }
  }
  Tape t;
  ScanBlockVars v = bind_scan_block(t, block);
  return selective_scan(t.constant(x), v).value();
}

}  // namespace

TEST_CASE("muted blocks leave the scatter mean at zero: output equals input") {
  const std::size_t D = 4, N = 6;
  Rng rng(5);
  nn::ParamStore ps;
  ClusterScanSet set = make_cluster_scan_set(ps, "s", 2, D, 3, 0, rng);
  for (auto& b : set.blocks) mute(b);
  TokenPlan plan = plan_of({{0, 2, 4}, {1, 2}}, {3, 5}, 1, N);
  Tensor f = random_tensor({D, N}, 9);
  Tape t;
  std::size_t scanned = 0;
  Var out = cluster_scan_spatial(t, t.constant(f), plan, set, &scanned);
  CHECK(scanned == 7);
  CHECK(scanned == plan.scanned_tokens());
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(out.value()[i] == f[i]);
}

TEST_CASE("pixels outside every sequence pass through unchanged") {
  const std::size_t D = 3, N = 5;
  Rng rng(7);
  nn::ParamStore ps;
  ClusterScanSet set = make_cluster_scan_set(ps, "s", 1, D, 2, 0, rng);
  randomize_store(ps, 11);
  TokenPlan plan = plan_of({{0, 1}}, {3}, 1, N);  // pixels 2 and 4 untouched
  Tensor f = random_tensor({D, N}, 13);
  Tape t;
  Var out = cluster_scan_spatial(t, t.constant(f), plan, set);
  for (std::size_t c = 0; c < D; ++c) {
    CHECK(out.value().at({c, 2}) == f.at({c, 2}));
    CHECK(out.value().at({c, 4}) == f.at({c, 4}));
  }
  // Touched pixels change.
  double diff = 0.0;
  for (std::size_t c = 0; c < D; ++c) diff += std::abs(out.value().at({c, 0}) - f.at({c, 0}));
  CHECK(diff > 0.0);
}

TEST_CASE("an empty plan is the identity") {
  const std::size_t D = 3, N = 4;
  Rng rng(3);
  nn::ParamStore ps;
  ClusterScanSet set = make_cluster_scan_set(ps, "s", 2, D, 2, 0, rng);
  randomize_store(ps, 15);
  TokenPlan plan = plan_of({{}, {}}, {}, 1, N);
  Tensor f = random_tensor({D, N}, 17);
  Tape t;
  std::size_t scanned = 99;
  Var out = cluster_scan_spatial(t, t.constant(f), plan, set, &scanned);
  CHECK(scanned == 0);
  for (std::size_t i = 0; i < f.numel(); ++i) CHECK(out.value()[i] == f[i]);
}

TEST_CASE("spatial pass equals hand gather-scan-scatter") {
  // Cluster 0 scans pixels [2, 0] (plan order), cluster 1 scans [1, 2], the
  // unselected sequence scans [3]. Pixel 2 is written twice -> mean of the two
  // writes; every written pixel also keeps its residual input.
  const std::size_t D = 2, N = 4, S = 2;
  Rng rng(17);
  nn::ParamStore ps;
  ClusterScanSet set = make_cluster_scan_set(ps, "s", 2, D, S, 0, rng);
  randomize_store(ps, 19);
  std::vector<int> c0{2, 0}, c1{1, 2}, un{3};
  TokenPlan plan = plan_of({c0, c1}, un, 1, N);
  Tensor f = random_tensor({D, N}, 23);

  Tape t;
  Var out = cluster_scan_spatial(t, t.constant(f), plan, set);

  Tensor y0 = scan_sequence_by_hand(set.blocks[0], f, c0);
  Tensor y1 = scan_sequence_by_hand(set.blocks[1], f, c1);
  Tensor yu = scan_sequence_by_hand(set.blocks[2], f, un);
  for (std::size_t c = 0; c < D; ++c) {
    // Pixel 0: one write from cluster 0, token 1.
    CHECK(out.value().at({c, 0}) ==
          doctest::Approx(y0.at({0, 1, c}) + f.at({c, 0})).epsilon(1e-12));
    // Pixel 1: one write from cluster 1, token 0.
    CHECK(out.value().at({c, 1}) ==
          doctest::Approx(y1.at({0, 0, c}) + f.at({c, 1})).epsilon(1e-12));
    // Pixel 2: mean of cluster 0 token 0 and cluster 1 token 1.
    double mean = 0.5 * (y0.at({0, 0, c}) + y1.at({0, 1, c}));
    CHECK(out.value().at({c, 2}) == doctest::Approx(mean + f.at({c, 2})).epsilon(1e-12));
    // Pixel 3: the unselected write.
    CHECK(out.value().at({c, 3}) ==
          doctest::Approx(yu.at({0, 0, c}) + f.at({c, 3})).epsilon(1e-12));
  }
}

TEST_CASE("swapping cluster order together with blocks changes nothing material") {
  const std::size_t D = 3, N = 8, S = 2;
  Rng rng(29);
  nn::ParamStore ps;
  ClusterScanSet set = make_cluster_scan_set(ps, "s", 2, D, S, 0, rng);
  randomize_store(ps, 31);
  std::vector<int> c0{0, 3, 5}, c1{5, 1, 6}, un{2, 7};
  Tensor f = random_tensor({D, N}, 37);

  Tape t1;
  Var a = cluster_scan_spatial(t1, t1.constant(f), plan_of({c0, c1}, un, 1, N), set);

  ClusterScanSet swapped;
  swapped.blocks = {set.blocks[1], set.blocks[0], set.blocks[2]};
  Tape t2;
  Var b = cluster_scan_spatial(t2, t2.constant(f), plan_of({c1, c0}, un, 1, N), swapped);

  for (std::size_t i = 0; i < f.numel(); ++i) {
    CHECK(a.value()[i] == doctest::Approx(b.value()[i]).epsilon(1e-12));
  }
}

TEST_CASE("spectral pass splits channels into groups and scans per token") {
  const std::size_t D = 6, G = 3, J = D / G, N = 4, S = 2;
  Rng rng(41);
  nn::ParamStore ps;
  ClusterScanSet set = make_cluster_scan_set(ps, "s", 1, J, S, 0, rng);
  randomize_store(ps, 43);
  mute(set.blocks[1]);
  std::vector<int> c0{1, 3};
  TokenPlan plan = plan_of({c0}, {}, 1, N);
  Tensor f = random_tensor({D, N}, 47);

  Tape t;
  std::size_t scanned = 0;
  Var out = cluster_scan_spectral(t, t.constant(f), plan, set, G, &scanned);
  CHECK(scanned == 2);

  // Hand computation: each selected pixel independently becomes a [1, G, J]
  // sequence through the cluster block; outputs re-concatenate channel-wise.
  for (int pix : c0) {
    Tensor x(Shape{1, G, J});
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t j = 0; j < J; ++j) {
        x.at({0, g, j}) = f.at({g * J + j, static_cast<std::size_t>(pix)});
      }
    }
    Tape th;
    ScanBlockVars v = bind_scan_block(th, set.blocks[0]);
    Tensor y = selective_scan(th.constant(x), v).value();
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t j = 0; j < J; ++j) {
        std::size_t ch = g * J + j;
        double expect = y.at({0, g, j}) + f.at({ch, static_cast<std::size_t>(pix)});
        CHECK(out.value().at({ch, static_cast<std::size_t>(pix)}) ==
              doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
  // Unselected pixels pass through.
  for (std::size_t c = 0; c < D; ++c) {
    CHECK(out.value().at({c, 0}) == f.at({c, 0}));
    CHECK(out.value().at({c, 2}) == f.at({c, 2}));
  }
}

TEST_CASE("spectral pass validates the group split") {
  Rng rng(51);
  nn::ParamStore ps;
  ClusterScanSet set = make_cluster_scan_set(ps, "s", 1, 3, 2, 0, rng);
  TokenPlan plan = plan_of({{0}}, {}, 1, 2);
  Tensor f = random_tensor({7, 2}, 53);  // 7 channels not divisible by 2 groups
  Tape t;
  CHECK_THROWS_AS(cluster_scan_spectral(t, t.constant(f), plan, set, 2),
                  std::invalid_argument);
}

TEST_CASE("gradients flow through both passes (finite differences)") {
  const std::size_t D = 4, N = 5, S = 2, G = 2;
  Rng rng(57);
  nn::ParamStore spatial_ps, spectral_ps;
  ClusterScanSet spatial = make_cluster_scan_set(spatial_ps, "sp", 1, D, S, 0, rng);
  ClusterScanSet spectral = make_cluster_scan_set(spectral_ps, "sc", 1, D / G, S, 0, rng);
  randomize_store(spatial_ps, 59);
  randomize_store(spectral_ps, 61);
  TokenPlan plan = plan_of({{0, 2, 3}}, {1}, 1, N);
  Tensor f = random_tensor({D, N}, 63);

  FdReport r1 = fd_check(
      {f},
      [&](Tape& t, std::vector<Var>& in) {
        return mean_all(square(cluster_scan_spatial(t, in[0], plan, spatial)));
      },
      {});
  CHECK(r1.failed == 0);

  FdReport r2 = fd_check(
      {f},
      [&](Tape& t, std::vector<Var>& in) {
        return mean_all(square(cluster_scan_spectral(t, in[0], plan, spectral, G)));
      },
      {});
  CHECK(r2.failed == 0);

  auto loss = [&](bool with_grad) {
    Tape t;
    Var l = mean_all(square(cluster_scan_spatial(t, t.constant(f), plan, spatial)));
    if (with_grad) t.backward(l);
    return l.value()[0];
  };
  FdReport r3 = fd_check_params(spatial_ps, loss, {});
  CHECK(r3.failed == 0);
}
