#include "doctest.h"
#include "fd_check.hpp"
#include "ssmix/envi.hpp"
#include "ssmix/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

using namespace ssmix;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

bool bit_equal_tensors(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("cross entropy is exactly zero on saturated correct logits") {
  // +1000 for the true class, -1000 elsewhere: log-sum-exp collapses to the
  // true logit in double precision, so the loss is exactly 0.
  const std::size_t K = 4, N = 6;
  Tensor z(Shape{K, N}, -1000.0);
  std::vector<std::int32_t> labels(N);
  std::vector<std::uint8_t> mask(N, 1);
  for (std::size_t j = 0; j < N; ++j) {
    labels[j] = static_cast<std::int32_t>(j % K + 1);
    z.at({static_cast<std::size_t>(labels[j] - 1), j}) = 1000.0;
  }
  Tape t;
  Var ce = masked_ce_mean(t.constant(z), labels, mask);
  CHECK(ce.value()[0] == 0.0);
}

TEST_CASE("cross entropy on uniform logits equals log K") {
  const std::size_t K = 5, N = 7;
  Tensor z(Shape{K, N}, 0.37);  // any constant
  std::vector<std::int32_t> labels(N, 2);
  std::vector<std::uint8_t> mask(N, 1);
  Tape t;
  Var ce = masked_ce_mean(t.constant(z), labels, mask);
  CHECK(ce.value()[0] == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy ignores unmasked and unlabelled pixels") {
  const std::size_t K = 3, N = 5;
  Tensor z = random_tensor({K, N}, 11);
  // Poison the ignored columns with huge values; they must not matter.
  for (std::size_t i = 0; i < K; ++i) {
    z.at({i, 3}) = 1e300;
    z.at({i, 4}) = -1e300;
  }
  std::vector<std::int32_t> labels{1, 2, 3, 1, 0};
  std::vector<std::uint8_t> mask{1, 1, 1, 0, 1};  // col 3 unmasked, col 4 unlabelled
  Tape t;
  Var ce = masked_ce_mean(t.constant(z), labels, mask);

  // Oracle over the three active columns.
  double expect = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    double mx = z.at({0, j});
    for (std::size_t i = 1; i < K; ++i) mx = std::max(mx, z.at({i, j}));
    double se = 0.0;
    for (std::size_t i = 0; i < K; ++i) se += std::exp(z.at({i, j}) - mx);
    expect += mx + std::log(se) - z.at({static_cast<std::size_t>(labels[j] - 1), j});
  }
  expect /= 3.0;
  CHECK(ce.value()[0] == doctest::Approx(expect).epsilon(1e-12));

  // Gradient stays zero on ignored columns.
  Tape t2;
  Var in = t2.input(z);
  t2.backward(masked_ce_mean(in, labels, mask));
  for (std::size_t i = 0; i < K; ++i) {
    CHECK(t2.grad(in.id).at({i, 3}) == 0.0);
    CHECK(t2.grad(in.id).at({i, 4}) == 0.0);
  }
}

TEST_CASE("cross entropy requires at least one active pixel and valid labels") {
  Tensor z = random_tensor({3, 4}, 13);
  std::vector<std::uint8_t> none(4, 0);
  std::vector<std::int32_t> labels{1, 2, 3, 1};
  Tape t;
  CHECK_THROWS_AS(masked_ce_mean(t.constant(z), labels, none), std::invalid_argument);
  std::vector<std::uint8_t> all(4, 1);
  std::vector<std::int32_t> bad{1, 2, 5, 1};  // 5 > K = 3
  CHECK_THROWS_AS(masked_ce_mean(t.constant(z), bad, all), std::invalid_argument);
}

TEST_CASE("cross entropy gradient agrees with finite differences") {
  const std::size_t K = 4, N = 6;
  Tensor z = random_tensor({K, N}, 17);
  std::vector<std::int32_t> labels{1, 4, 2, 0, 3, 1};
  std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 1};
  FdReport rep = fd_check(
      {z},
      [&](Tape&, std::vector<Var>& in) { return masked_ce_mean(in[0], labels, mask); },
      {});
  CHECK(rep.failed == 0);
}

TEST_CASE("sparsity of uniform four-way abundance is two per pixel") {
  Tensor a(Shape{4, 9}, 0.25);
  Tape t;
  Var s = abundance_sparsity(t.constant(a));
  CHECK(std::abs(s.value()[0] - 2.0) < 1e-6);
}

TEST_CASE("sparsity prefers peaked abundance columns") {
  Tensor peaked(Shape{4, 1}, std::vector<double>{1, 0, 0, 0});
  Tensor flat(Shape{4, 1}, 0.25);
  Tape t;
  double sp = abundance_sparsity(t.constant(peaked)).value()[0];
  double sf = abundance_sparsity(t.constant(flat)).value()[0];
  CHECK(sp < sf);  // sqrt is concave: mass spread out costs more
}

TEST_CASE("learning rate decays by 0.9 every 50 epochs") {
  CHECK(decayed_lr(1e-3, 0, 0.9, 50) == 1e-3);
  CHECK(decayed_lr(1e-3, 49, 0.9, 50) == 1e-3);
  CHECK(decayed_lr(1e-3, 50, 0.9, 50) == doctest::Approx(9e-4).epsilon(1e-12));
  CHECK(decayed_lr(1e-3, 99, 0.9, 50) == doctest::Approx(9e-4).epsilon(1e-12));
  CHECK(decayed_lr(1e-3, 100, 0.9, 50) == doctest::Approx(8.1e-4).epsilon(1e-12));
  CHECK(decayed_lr(5e-4, 150, 0.9, 50) == doctest::Approx(5e-4 * 0.729).epsilon(1e-12));
}

TEST_CASE("classification metrics: hand confusion oracles") {
  // truth:  1 1 1 1 2 2 2 2   pred: 1 1 1 2 2 2 1 1
  std::vector<std::int32_t> truth{1, 1, 1, 1, 2, 2, 2, 2};
  std::vector<std::int32_t> pred{1, 1, 1, 2, 2, 2, 1, 1};
  std::vector<std::uint8_t> mask(8, 1);
  Confusion c = confusion_matrix(truth, pred, mask, 2);
  CHECK(c.at(0, 0) == 3);
  CHECK(c.at(0, 1) == 1);
  CHECK(c.at(1, 0) == 2);
  CHECK(c.at(1, 1) == 2);
  CHECK(overall_accuracy(c) == doctest::Approx(5.0 / 8.0));
  CHECK(average_accuracy(c) == doctest::Approx((3.0 / 4.0 + 2.0 / 4.0) / 2.0));
  // pe = (4/8)(5/8) + (4/8)(3/8) = 0.5; kappa = (0.625 - 0.5) / 0.5 = 0.25.
  CHECK(kappa(c) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("constant prediction on balanced classes: half right, zero kappa") {
  std::vector<std::int32_t> truth{1, 1, 1, 2, 2, 2};
  std::vector<std::int32_t> pred(6, 1);
  std::vector<std::uint8_t> mask(6, 1);
  Confusion c = confusion_matrix(truth, pred, mask, 2);
  CHECK(overall_accuracy(c) == doctest::Approx(0.5));
  CHECK(kappa(c) == doctest::Approx(0.0));
}

TEST_CASE("perfect prediction: unit accuracy and kappa") {
  std::vector<std::int32_t> truth{1, 2, 3, 1, 2, 3};
  std::vector<std::uint8_t> mask(6, 1);
  Confusion c = confusion_matrix(truth, truth, mask, 3);
  CHECK(overall_accuracy(c) == 1.0);
  CHECK(average_accuracy(c) == 1.0);
  CHECK(kappa(c) == doctest::Approx(1.0));
}

TEST_CASE("average accuracy skips classes absent from the mask") {
  std::vector<std::int32_t> truth{1, 1, 2};
  std::vector<std::int32_t> pred{1, 2, 2};
  std::vector<std::uint8_t> mask{1, 1, 1};
  Confusion c = confusion_matrix(truth, pred, mask, 5);  // classes 3..5 empty
  CHECK(average_accuracy(c) == doctest::Approx((0.5 + 1.0) / 2.0));
}

TEST_CASE("argmax prediction breaks ties toward the lower class") {
  Tensor z(Shape{3, 2}, std::vector<double>{0.5, 0.1, 0.5, 0.7, 0.2, 0.7});
  std::vector<std::int32_t> p = predict_labels(z);
  CHECK(p[0] == 1);  // 0.5 tie between class 1 and 2
  CHECK(p[1] == 2);  // 0.7 tie between class 2 and 3
}

TEST_CASE("assignment matches brute force on random cost matrices") {
  Rng rng(2025);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.bounded(5);
    Tensor cost(Shape{n, n});
    for (std::size_t i = 0; i < cost.numel(); ++i) cost[i] = rng.uniform(0.0, 10.0);
    std::vector<std::size_t> got = hungarian_min_assign(cost);
    double got_cost = 0.0;
    std::vector<char> used(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      got_cost += cost.at({i, got[i]});
      CHECK(got[i] < n);
      CHECK(!used[got[i]]);
      used[got[i]] = 1;
    }
    // Brute force over all permutations.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e18;
    do {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += cost.at({i, perm[i]});
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got_cost == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("unmixing metrics undo an endmember permutation") {
  const std::size_t P = 4, C = 12, N = 30;
  Tensor true_end = random_tensor({P, C}, 31, 0.1, 1.0);
  Tensor true_ab = random_tensor({P, N}, 32, 0.0, 1.0);
  // Estimated outputs are the truth under permutation (2,0,3,1) plus noise.
  std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor est_end(Shape{P, C}), est_ab(Shape{P, N});
  Rng rng(33);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      est_end.at({perm[p], c}) = true_end.at({p, c}) * (1.0 + 0.001 * rng.normal());
    }
    for (std::size_t n = 0; n < N; ++n) {
      est_ab.at({perm[p], n}) = true_ab.at({p, n}) + 0.01 * rng.normal();
    }
  }
  UnmixMetrics m = unmixing_metrics(true_end, est_end, true_ab, est_ab);
  for (std::size_t p = 0; p < P; ++p) CHECK(m.assignment[p] == perm[p]);
  CHECK(m.mean_sad < 0.01);
  CHECK(m.abundance_rmse < 0.05);

  // Hand RMSE under the recovered assignment.
  double se = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t n = 0; n < N; ++n) {
      double d = true_ab.at({p, n}) - est_ab.at({m.assignment[p], n});
      se += d * d;
    }
  }
  CHECK(m.abundance_rmse == doctest::Approx(std::sqrt(se / (P * N))).epsilon(1e-12));
}

TEST_CASE("loss bundle decomposes exactly into its parts") {
  SyntheticData d = generate_synthetic_cube(2, 10, 6, 6, 30.0, 3);
  Tensor cube = normalize_bands(d.cube.values);
  ModelConfig cfg;
  cfg.bands = 10;
  cfg.height = 6;
  cfg.width = 6;
  cfg.num_classes = 2;
  cfg.dim = 8;
  cfg.endmembers = 2;
  cfg.variants = 2;
  cfg.groups = 2;
  cfg.state = 4;
  cfg.seed = 1;
  Model m = make_model_from_cube(cfg, cube);
  SplitMasks split = stratified_split(d.labels, 0.3, 0.1, 5);

  Tape t;
  ForwardOptions fo;
  fo.update_ema = true;
  ForwardResult f = m.forward(t, cube, fo);
  LossBundle b = multitask_loss(t, f, cube, d.labels.labels, split.train, 0.01, 0.001);
  CHECK(b.total.value()[0] == b.ce + (0.01 * b.sad + 0.001 * b.sparsity));
  CHECK(b.ce > 0.0);
  CHECK(b.sad > 0.0);
  CHECK(b.sparsity > 0.0);

  Tape t2;
  UnmixForward uf = m.unmix_forward(t2, cube);
  UnmixLossBundle ub = unmix_loss(t2, uf, cube, 0.01, 0.001);
  CHECK(ub.total.value()[0] == 0.01 * ub.sad + 0.001 * ub.sparsity);
}

namespace {

struct TrainFixture {
  SyntheticData data;
  Tensor cube;
  SplitMasks split;
  ModelConfig cfg;

  TrainFixture() : data(generate_synthetic_cube(3, 12, 8, 8, 30.0, 77)) {
    cube = normalize_bands(data.cube.values);
    split = stratified_split(data.labels, 0.3, 0.2, 9);
    cfg.bands = 12;
    cfg.height = 8;
    cfg.width = 8;
    cfg.num_classes = 3;
    cfg.dim = 8;
    cfg.endmembers = 3;
    cfg.variants = 2;
    cfg.groups = 2;
    cfg.state = 4;
    cfg.seed = 21;
  }
};

}  // namespace

TEST_CASE("a few epochs of training reduce the loss and fill the history") {
  TrainFixture fx;
  Model m = make_model_from_cube(fx.cfg, fx.cube);
  TrainConfig tc;
  tc.epochs = 8;
  TrainResult r = train_model(m, fx.cube, fx.data.labels, fx.split, tc);
  CHECK_FALSE(r.diverged);
  REQUIRE(r.history.size() == 8);
  CHECK(r.history.back().total < r.history.front().total);
  for (std::size_t e = 0; e < 8; ++e) {
    CHECK(r.history[e].epoch == e);
    CHECK(r.history[e].lr_cls == decayed_lr(1e-3, e, 0.9, 50));
    CHECK(r.history[e].lr_um == decayed_lr(5e-4, e, 0.9, 50));
    CHECK(r.history[e].val_oa >= 0.0);
    CHECK(r.history[e].val_oa <= 1.0);
    CHECK(r.history[e].scanned > 0);
  }
  CHECK(r.best_epoch < 8);
  // EMA advanced exactly once per epoch.
  CHECK(m.abundance_state().epochs_applied >= 1);
}

TEST_CASE("training is deterministic and seed-sensitive") {
  TrainFixture fx;
  TrainConfig tc;
  tc.epochs = 4;

  auto run = [&](std::uint64_t seed) {
    ModelConfig cfg = fx.cfg;
    cfg.seed = seed;
    Model m = make_model_from_cube(cfg, fx.cube);
    return train_model(m, fx.cube, fx.data.labels, fx.split, tc);
  };
  TrainResult a = run(21), b = run(21), c = run(22);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(std::memcmp(&a.history[e].total, &b.history[e].total, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.history[e].ce, &b.history[e].ce, sizeof(double)) == 0);
    CHECK(std::memcmp(&a.history[e].sad, &b.history[e].sad, sizeof(double)) == 0);
  }
  bool differs = false;
  for (std::size_t e = 0; e < c.history.size() && !differs; ++e) {
    differs = a.history[e].total != c.history[e].total;
  }
  CHECK(differs);
}

TEST_CASE("best-epoch parameters are restored after training") {
  TrainFixture fx;
  Model m = make_model_from_cube(fx.cfg, fx.cube);
  TrainConfig tc;
  tc.epochs = 6;
  TrainResult r = train_model(m, fx.cube, fx.data.labels, fx.split, tc);

  // Recompute validation accuracy with the restored parameters: it must equal
  // the recorded best. The stored abundance state reproduces that epoch's
  // token plan because blending peeks at the same EMA values.
  const EpochStats& best = r.history[r.best_epoch];
  CHECK(r.best_val_oa == best.val_oa);
  for (const auto& row : r.history) CHECK(row.val_oa <= r.best_val_oa);
}

TEST_CASE("unmixing-only training drives the reconstruction loss down") {
  TrainFixture fx;
  Model m = make_model_from_cube(fx.cfg, fx.cube);
  TrainConfig tc;
  tc.epochs = 10;
  UnmixTrainResult r = train_unmix_only(m, fx.cube, tc);
  CHECK_FALSE(r.diverged);
  REQUIRE(r.history.size() == 10);
  CHECK(r.history.back().sad < r.history.front().sad);
}

TEST_CASE("zero learning rate and zero epochs leave parameters untouched") {
  TrainFixture fx;
  Model m = make_model_from_cube(fx.cfg, fx.cube);
  std::vector<Tensor> before;
  for (const auto& p : m.params().items()) before.push_back(p->value);

  TrainConfig tc;
  tc.epochs = 0;
  TrainResult r0 = train_model(m, fx.cube, fx.data.labels, fx.split, tc);
  CHECK(r0.history.empty());
  {
    std::size_t i = 0;
    for (const auto& p : m.params().items()) CHECK(bit_equal_tensors(before[i++], p->value));
  }

  // One full forward/backward followed by an Adam step at lr 0 everywhere.
  Tape t;
  ForwardOptions fo;
  fo.update_ema = true;
  ForwardResult f = m.forward(t, fx.cube, fo);
  LossBundle b = multitask_loss(t, f, fx.cube, fx.data.labels.labels, fx.split.train,
                                0.01, 0.001);
  m.params().zero_grads();
  t.backward(b.total);
  nn::Adam opt(m.params());
  opt.step(std::vector<double>(nn::kNumGroups, 0.0));
  std::size_t i = 0;
  for (const auto& p : m.params().items()) CHECK(bit_equal_tensors(before[i++], p->value));
}

TEST_CASE("history CSV round-trips every float bit-exactly") {
  TrainFixture fx;
  Model m = make_model_from_cube(fx.cfg, fx.cube);
  TrainConfig tc;
  tc.epochs = 3;
  TrainResult r = train_model(m, fx.cube, fx.data.labels, fx.split, tc);

  std::string path = "/tmp/ssmix_history_test.csv";
  write_history_csv(path, r.history);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header ==
        "epoch,total,ce,sad,sparsity,train_oa,val_oa,val_aa,val_kappa,lr_cls,lr_um,scanned");
  for (const auto& row : r.history) {
    std::string line;
    REQUIRE(std::getline(f, line));
    // Parse back and compare bit-exactly.
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    REQUIRE(cells.size() == 12);
    CHECK(std::stoull(cells[0]) == row.epoch);
    CHECK(std::stod(cells[1]) == row.total);
    CHECK(std::stod(cells[2]) == row.ce);
    CHECK(std::stod(cells[3]) == row.sad);
    CHECK(std::stod(cells[5]) == row.train_oa);
    CHECK(std::stod(cells[6]) == row.val_oa);
    CHECK(std::stod(cells[7]) == row.val_aa);
    CHECK(std::stod(cells[8]) == row.val_kappa);
    CHECK(std::stod(cells[9]) == row.lr_cls);
  }
}
