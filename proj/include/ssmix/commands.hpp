#pragma once

#include <cstdint>
#include <string>

#include "ssmix/run_config.hpp"

namespace ssmix {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // validation, config or I/O errors
inline constexpr int kExitDiverged = 2;  // training loss left the finite range

// Resolves an output directory against the SSMIX_OUTPUT_ROOT environment
// variable: relative paths land inside the root when it is set.
std::string resolve_output_dir(const std::string& dir);

struct SynthOptions {
  std::size_t endmembers = 4;
  std::size_t size = 32;  // square scene, H = W
  std::size_t bands = 32;
  double snr_db = 30.0;  // must be positive
  std::uint64_t seed = 7;
  std::string out_dir;
  bool force = false;
  bool envi_mirror = true;
};

// Writes cube.arr ([C,H,W]), labels.arr, truth_endmembers.arr ([P,C]),
// truth_abundance.arr ([P,N]), a synth.ini provenance note and, unless
// disabled, an ENVI mirror cube.hdr/cube.raw. Deterministic in the options.
int cmd_synth(const SynthOptions& opt);

// Trains the full model: writes effective.ini, history.csv and checkpoint/.
// Returns kExitDiverged when the loss leaves the finite range.
int cmd_train(const RunConfig& rc);

// Loads checkpoint_dir, re-derives the data split, evaluates on `split`
// (train|val|test|all) and writes metrics.json, classification_map.png,
// abundance_<p>.png, endmembers.png, endmembers.csv and tokenplan.jsonl.
int cmd_eval(const RunConfig& rc, const std::string& checkpoint_dir,
             const std::string& split);

// Trains the unmixing branch alone on the raw (unnormalised) cube: writes
// effective.ini, unmix_history.csv, abundance.arr and per-plane PNGs,
// endmembers.csv/.arr/.png and the per-pixel reconstruction-angle map.
int cmd_unmix(const RunConfig& rc);

}  // namespace ssmix
