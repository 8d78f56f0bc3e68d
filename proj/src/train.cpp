#include "ssmix/train.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "ssmix/array_io.hpp"

namespace ssmix {

Var masked_ce_mean(Var logits, const std::vector<std::int32_t>& labels,
                   const std::vector<std::uint8_t>& mask) {
  Tape& t = *logits.tape;
  const Tensor& z = logits.value();
  if (z.ndim() != 2) throw std::invalid_argument("masked_ce_mean: logits must be [K,N]");
  const std::size_t k = z.dim(0), n = z.dim(1);
  if (labels.size() != n || mask.size() != n) {
    throw std::invalid_argument("masked_ce_mean: labels/mask length mismatch");
  }

  // Forward: stabilised log-sum-exp per masked column; cache the softmax and
  // the (column, label) pairs by value for the backward pass.
  auto soft = std::make_shared<Tensor>(Shape{k, n}, 0.0);
  auto active = std::make_shared<std::vector<std::pair<std::uint32_t, std::uint32_t>>>();
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!mask[j] || labels[j] == 0) continue;
    const auto lab = static_cast<std::size_t>(labels[j]);
    if (lab > k) throw std::invalid_argument("masked_ce_mean: label outside 1..K");
    double mx = z.at({0, j});
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, z.at({i, j}));
    double se = 0.0;
    for (std::size_t i = 0; i < k; ++i) se += std::exp(z.at({i, j}) - mx);
    const double lse = mx + std::log(se);
    loss += lse - z.at({lab - 1, j});
    for (std::size_t i = 0; i < k; ++i) {
      soft->at({i, j}) = std::exp(z.at({i, j}) - mx) / se;
    }
    active->emplace_back(static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(lab - 1));
  }
  if (active->empty()) {
    throw std::invalid_argument("masked_ce_mean: no labelled pixel under the mask");
  }
  const double count = static_cast<double>(active->size());

  return t.make(
      Tensor(Shape{1}, loss / count), {logits},
      [logits, soft, active, k, n, count](Tape& tp, int id) {
        const double g = tp.grad(id)[0] / count;
        Tensor dz(Shape{k, n}, 0.0);
        for (const auto& [j, lab] : *active) {
          for (std::size_t i = 0; i < k; ++i) {
            dz.at({i, j}) = g * (soft->at({i, j}) - (i == lab ? 1.0 : 0.0));
          }
        }
        tp.add_grad(logits.id, std::move(dz));
      });
}

Var abundance_sparsity(Var a) {
  const std::size_t n = a.value().dim(1);
  return scale(sum_all(sqrt_shift(a, 1e-8)), 1.0 / static_cast<double>(n));
}

LossBundle multitask_loss(Tape& t, const ForwardResult& f, const Tensor& cube,
                          const std::vector<std::int32_t>& labels,
                          const std::vector<std::uint8_t>& train_mask,
                          double sad_weight, double sparsity_weight) {
  LossBundle b;
  Var ce = masked_ce_mean(f.logits, labels, train_mask);
  Var sad = mean_spectral_angle(cube, f.recon);
  Var sp = abundance_sparsity(f.abundance);
  b.ce = ce.value()[0];
  b.sad = sad.value()[0];
  b.sparsity = sp.value()[0];
  b.total = add(ce, add(scale(sad, sad_weight), scale(sp, sparsity_weight)));
  (void)t;
  return b;
}

UnmixLossBundle unmix_loss(Tape& t, const UnmixForward& f, const Tensor& cube,
                           double sad_weight, double sparsity_weight) {
  UnmixLossBundle b;
  Var sad = mean_spectral_angle(cube, f.recon);
  Var sp = abundance_sparsity(f.abundance);
  b.sad = sad.value()[0];
  b.sparsity = sp.value()[0];
  b.total = add(scale(sad, sad_weight), scale(sp, sparsity_weight));
  (void)t;
  return b;
}

double decayed_lr(double base, std::size_t epoch, double factor, std::size_t every) {
  if (every == 0) return base;
  return base * std::pow(factor, static_cast<double>(epoch / every));
}

namespace {

struct MaskedMetrics {
  double oa = 0.0, aa = 0.0, kappa_v = 0.0;
};

MaskedMetrics masked_metrics(const Tensor& logits, const std::vector<std::int32_t>& labels,
                             const std::vector<std::uint8_t>& mask,
                             std::size_t num_classes) {
  std::vector<std::int32_t> pred = predict_labels(logits);
  Confusion c = confusion_matrix(labels, pred, mask, num_classes);
  return {overall_accuracy(c), average_accuracy(c), kappa(c)};
}

}  // namespace

TrainResult train_model(Model& m, const Tensor& cube, const LabelMap& labels,
                        const SplitMasks& split, const TrainConfig& cfg) {
  if (labels.labels.size() != cube.dim(1)) {
    throw std::invalid_argument("train_model: label map does not match the cube");
  }
  TrainResult res;
  nn::Adam opt(m.params());
  Model::Snapshot best = m.snapshot();
  double best_oa = -1.0;
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_cls = decayed_lr(cfg.lr_cls, epoch, cfg.lr_decay, cfg.lr_decay_every);
    const double lr_um = decayed_lr(cfg.lr_um, epoch, cfg.lr_decay, cfg.lr_decay_every);

    Tape t;
    ForwardOptions fo;
    fo.update_ema = true;
    fo.gamma = temporal_gamma(epoch);
    ForwardResult f = m.forward(t, cube, fo);
    LossBundle loss = multitask_loss(t, f, cube, labels.labels, split.train,
                                     cfg.sad_weight, cfg.sparsity_weight);

    EpochStats row;
    row.epoch = epoch;
    row.total = loss.total.value()[0];
    row.ce = loss.ce;
    row.sad = loss.sad;
    row.sparsity = loss.sparsity;
    row.lr_cls = lr_cls;
    row.lr_um = lr_um;
    row.scanned = f.scanned;

    if (!std::isfinite(row.total)) {
      res.diverged = true;
      res.diverged_epoch = epoch;
      res.history.push_back(row);
      break;
    }

    row.train_oa = masked_metrics(f.logits.value(), labels.labels, split.train,
                                  m.config().num_classes)
                       .oa;
    const MaskedMetrics vm =
        masked_metrics(f.logits.value(), labels.labels,
                       split.val_count > 0 ? split.val : split.train,
                       m.config().num_classes);
    row.val_oa = vm.oa;
    row.val_aa = vm.aa;
    row.val_kappa = vm.kappa_v;
    res.history.push_back(row);

    if (row.val_oa > best_oa) {
      best_oa = row.val_oa;
      best_epoch = epoch;
      best = m.snapshot();
    }

    m.params().zero_grads();
    t.backward(loss.total);
    std::vector<double> lrs(nn::kNumGroups, 0.0);
    lrs[nn::kGroupClassification] = lr_cls;
    lrs[nn::kGroupUnmixing] = lr_um;
    opt.step(lrs);

    if (cfg.verbose) {
      std::cerr << "epoch " << epoch << " total " << row.total << " ce " << row.ce
                << " sad " << row.sad << " val_oa " << row.val_oa << "\n";
    }
  }

  if (best_oa >= 0.0) {
    m.restore(best);
    res.best_epoch = best_epoch;
    res.best_val_oa = best_oa;
  }
  return res;
}

UnmixTrainResult train_unmix_only(Model& m, const Tensor& cube, const TrainConfig& cfg) {
  UnmixTrainResult res;
  nn::Adam opt(m.params());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_um = decayed_lr(cfg.lr_um, epoch, cfg.lr_decay, cfg.lr_decay_every);
    Tape t;
    UnmixForward f = m.unmix_forward(t, cube);
    UnmixLossBundle loss = unmix_loss(t, f, cube, cfg.sad_weight, cfg.sparsity_weight);

    UnmixEpochStats row;
    row.epoch = epoch;
    row.total = loss.total.value()[0];
    row.sad = loss.sad;
    row.sparsity = loss.sparsity;
    row.lr_um = lr_um;
    res.history.push_back(row);

    if (!std::isfinite(row.total)) {
      res.diverged = true;
      res.diverged_epoch = epoch;
      break;
    }

    m.params().zero_grads();
    t.backward(loss.total);
    // The shared embedding sits in the classification group but feeds the
    // reconstruction, so it gets the same rate here; classifier-only
    // parameters receive zero gradient and therefore never move under Adam.
    std::vector<double> lrs(nn::kNumGroups, lr_um);
    opt.step(lrs);

    if (cfg.verbose) {
      std::cerr << "epoch " << epoch << " total " << row.total << " sad " << row.sad
                << "\n";
    }
  }
  return res;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write history file " + path);
  f << "epoch,total,ce,sad,sparsity,train_oa,val_oa,val_aa,val_kappa,lr_cls,lr_um,scanned\n";
  for (const auto& r : rows) {
    f << r.epoch << ',' << g17(r.total) << ',' << g17(r.ce) << ',' << g17(r.sad) << ','
      << g17(r.sparsity) << ',' << g17(r.train_oa) << ',' << g17(r.val_oa) << ','
      << g17(r.val_aa) << ',' << g17(r.val_kappa) << ',' << g17(r.lr_cls) << ','
      << g17(r.lr_um) << ',' << r.scanned << '\n';
  }
}

void write_unmix_history_csv(const std::string& path,
                             const std::vector<UnmixEpochStats>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write history file " + path);
  f << "epoch,total,sad,sparsity,lr_um\n";
  for (const auto& r : rows) {
    f << r.epoch << ',' << g17(r.total) << ',' << g17(r.sad) << ',' << g17(r.sparsity)
      << ',' << g17(r.lr_um) << '\n';
  }
}

}  // namespace ssmix
