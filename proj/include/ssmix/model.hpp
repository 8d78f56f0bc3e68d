#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ssmix/hsi_data.hpp"
#include "ssmix/mamba.hpp"
#include "ssmix/nn.hpp"
#include "ssmix/tokens.hpp"
#include "ssmix/unmixing.hpp"
#include "ssmix/vca.hpp"

namespace ssmix {

struct ModelConfig {
  std::size_t bands = 0;        // input channels C
  std::size_t height = 0;       // image rows
  std::size_t width = 0;        // image cols
  std::size_t num_classes = 0;  // classification output K
  std::size_t dim = 16;         // feature channels D
  std::size_t endmembers = 4;   // abundance channels P
  std::size_t variants = 2;     // spectrum variants per endmember R
  std::size_t groups = 4;       // channel groups in the spectral pass
  std::size_t state = 8;        // scan state size
  double lambda = 0.1;          // token budget scale
  double alpha = 0.3;           // budget weight on the plane maximum
  double beta = 0.7;            // budget weight on the plane mean
  double tau = 0.9;             // abundance EMA decay
  std::uint64_t seed = 0;       // parameter initialisation stream

  // Ablations.
  bool no_pos_um = false;        // drop the unmixing positional gate
  bool no_pos_cls = false;       // drop the classification positional gate
  bool no_topk = false;          // scan every pixel in every sequence
  bool no_variability = false;   // single spectrum per endmember (R = 1)
  bool freeze_endmembers = false;

  void validate() const;  // throws std::invalid_argument on nonsense
};

// Everything one forward pass produces. Tape nodes are only valid while the
// tape that built them is alive.
struct ForwardResult {
  Var features;   // shared embedding F [D, N]
  Var f_abu;      // raw abundance features [P, N]
  Var abundance;  // simplex abundance maps A [P, N]
  Var weights;    // variant weights [P, R, N]
  Var recon;      // mixture reconstruction [C, N]
  Var logits;     // class scores [K, N]
  TokenPlan plan;            // token selection used by the scans
  Tensor a_temp;             // temporal abundance the plan was built from
  std::size_t scanned = 0;   // tokens actually scanned this pass
};

// The unmixing-only subset (no token selection, scans or classifier).
struct UnmixForward {
  Var shared;  // embedding before either positional gate [D, N]
  Var features, f_abu, abundance, weights, recon;
};

struct ForwardOptions {
  bool update_ema = false;  // advance the temporal abundance state
  double gamma = 0.0;       // blend weight toward the stored EMA
  const TokenPlan* forced_plan = nullptr;  // override token selection (tests)
};

class Model {
 public:
  // initial_endmembers is [P, C]; typically the extreme-pixel pick from vca().
  Model(const ModelConfig& cfg, const Tensor& initial_endmembers);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  ForwardResult forward(Tape& t, const Tensor& cube /* [C, N] */,
                        const ForwardOptions& opt);
  UnmixForward unmix_forward(Tape& t, const Tensor& cube);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  AbundanceState& abundance_state() { return abu_state_; }
  const AbundanceState& abundance_state() const { return abu_state_; }
  const EndmemberBank& endmember_bank() const { return bank_; }

  // Deep copy / restore of all parameter values plus the abundance state
  // (used for best-epoch snapshots).
  struct Snapshot {
    std::vector<Tensor> values;
    AbundanceState abu;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  ModelConfig cfg_;
  nn::ParamStore params_;
  nn::Linear embed_;
  nn::BatchNorm embed_bn_;
  PositionalGate gate_um_, gate_cls_;  // unused when the ablation drops them
  AbundanceHead abu_head_;
  VariabilityHead var_head_;
  EndmemberBank bank_;
  ClusterScanSet spatial_, spectral_;
  nn::Linear fusion_;
  nn::Linear cls_head_;
  AbundanceState abu_state_;
  Tensor pos_um_, pos_cls_;
};

// Runs the extreme-pixel extraction on the cube to seed the endmember bank.
Model make_model_from_cube(const ModelConfig& cfg, const Tensor& cube /* [C,N] */);

// Checkpoints: one array file per parameter plus a JSON manifest carrying the
// model configuration, the abundance EMA state and training metadata.
void save_checkpoint(const Model& m, const std::string& dir, std::size_t epoch,
                     double best_val_oa);
Model load_checkpoint(const std::string& dir, std::size_t* epoch = nullptr,
                      double* best_val_oa = nullptr);

}  // namespace ssmix
