#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmix/hsi_data.hpp"
#include "ssmix/metrics.hpp"
#include "ssmix/model.hpp"

namespace ssmix {

// Mean cross-entropy over the masked, labelled pixels of [K, N] logits.
// Labels are one-based; zero marks unlabelled. Log-sum-exp stabilised.
// Throws when the mask selects no labelled pixel.
Var masked_ce_mean(Var logits, const std::vector<std::int32_t>& labels,
                   const std::vector<std::uint8_t>& mask);

// Sparsity pressure on abundance maps: sum_p sqrt(A[p,n] + 1e-8) averaged
// over pixels (columns).
Var abundance_sparsity(Var a);

// total = ce + sad_weight * mean-angle(cube, recon) + sparsity_weight * sparsity.
// The scalar parts are plain readbacks of the corresponding tape nodes, so
// ce + sad_weight*sad + sparsity_weight*sparsity reproduces total exactly.
struct LossBundle {
  Var total;
  double ce = 0.0;
  double sad = 0.0;
  double sparsity = 0.0;
};

LossBundle multitask_loss(Tape& t, const ForwardResult& f, const Tensor& cube,
                          const std::vector<std::int32_t>& labels,
                          const std::vector<std::uint8_t>& train_mask,
                          double sad_weight, double sparsity_weight);

// Unmixing-only objective (no classifier): sad_weight * SAD + sparsity_weight
// * sparsity, same nodes as the multi-task loss.
struct UnmixLossBundle {
  Var total;
  double sad = 0.0;
  double sparsity = 0.0;
};

UnmixLossBundle unmix_loss(Tape& t, const UnmixForward& f, const Tensor& cube,
                           double sad_weight, double sparsity_weight);

// Stepped exponential decay: base * factor^(epoch / every), integer division.
double decayed_lr(double base, std::size_t epoch, double factor, std::size_t every);

struct TrainConfig {
  std::size_t epochs = 300;
  double lr_cls = 1e-3;
  double lr_um = 5e-4;
  double lr_decay = 0.9;
  std::size_t lr_decay_every = 50;
  double sad_weight = 0.01;
  double sparsity_weight = 0.001;
  bool verbose = false;  // per-epoch stderr progress
};

struct EpochStats {
  std::size_t epoch = 0;
  double total = 0.0, ce = 0.0, sad = 0.0, sparsity = 0.0;
  double train_oa = 0.0, val_oa = 0.0, val_aa = 0.0, val_kappa = 0.0;
  double lr_cls = 0.0, lr_um = 0.0;
  std::size_t scanned = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;    // epoch index of the restored parameters
  double best_val_oa = 0.0;
  bool diverged = false;         // loss left the finite range; aborted early
  std::size_t diverged_epoch = 0;
};

// Full-image gradient steps; one forward/backward per epoch, abundance EMA
// advanced exactly once per epoch. Validation accuracy is measured on the
// same forward pass that produced the gradients (before the update). The
// parameters with the best validation accuracy are restored at the end.
TrainResult train_model(Model& m, const Tensor& cube, const LabelMap& labels,
                        const SplitMasks& split, const TrainConfig& cfg);

// Unmixing-only training (no labels involved).
struct UnmixEpochStats {
  std::size_t epoch = 0;
  double total = 0.0, sad = 0.0, sparsity = 0.0;
  double lr_um = 0.0;
};

struct UnmixTrainResult {
  std::vector<UnmixEpochStats> history;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
};

UnmixTrainResult train_unmix_only(Model& m, const Tensor& cube, const TrainConfig& cfg);

// history.csv writers; every floating-point field is rendered with enough
// digits to round-trip bit-exactly.
void write_history_csv(const std::string& path, const std::vector<EpochStats>& rows);
void write_unmix_history_csv(const std::string& path,
                             const std::vector<UnmixEpochStats>& rows);

}  // namespace ssmix
