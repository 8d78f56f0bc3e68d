#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "ssmix/model.hpp"
#include "ssmix/train.hpp"

namespace ssmix {

// One run's complete configuration, read from an INI-style text file with
// sections [data], [model], [train], [ablation] and [output]. Command-line
// flags override file values; the effective result is echoed next to the run
// outputs and re-running with that echo reproduces the run.
struct RunConfig {
  // [data] — where the cube and labels come from and how they are split.
  std::string cube;           // array container (.arr) or ENVI header (.hdr)
  std::string labels;         // label map container; optional for unmix runs
  std::string truth_endmembers;  // optional [P,C] ground truth for metrics
  std::string truth_abundance;   // optional [P,N] ground truth for metrics
  double train_frac = 0.30;
  double val_frac = 0.20;
  std::uint64_t split_seed = 1;

  // [model] — geometry-free hyperparameters; C/H/W/K are read off the data.
  std::size_t dim = 16;
  std::size_t endmembers = 4;
  std::size_t variants = 2;
  std::size_t groups = 4;
  std::size_t state = 8;
  double lambda = 0.1;
  double alpha = 0.3;
  double beta = 0.7;
  double tau = 0.9;
  std::uint64_t seed = 0;

  // [train]
  std::size_t epochs = 300;
  double lr_cls = 1e-3;
  double lr_um = 5e-4;
  double lr_decay = 0.9;
  std::size_t lr_decay_every = 50;
  double sad_weight = 0.01;
  double sparsity_weight = 0.001;
  bool verbose = false;

  // [ablation]
  bool no_pos_um = false;
  bool no_pos_cls = false;
  bool no_topk = false;
  bool no_variability = false;
  bool freeze_endmembers = false;

  // [output]
  std::string out_dir;
  bool force = false;       // overwrite an existing output directory
  bool envi_mirror = true;  // synth: also write an ENVI copy of the cube

  // Projections onto the library config structs. The model geometry
  // (bands/height/width/num_classes) must be supplied from the data.
  ModelConfig model_config(std::size_t bands, std::size_t height, std::size_t width,
                           std::size_t num_classes) const;
  TrainConfig train_config() const;
};

// Parses `key = value` lines under [section] headers. '#' and ';' start
// comments; blank lines are ignored; keys outside any section or not listed
// above are rejected with the offending line quoted.
RunConfig parse_run_config_text(const std::string& text, const RunConfig& base = {});
RunConfig parse_run_config_file(const std::string& path, const RunConfig& base = {});

// Writes every field in a fixed order; parse(write(rc)) == rc, with doubles
// rendered so they survive the round trip bit-exactly.
void write_run_config(std::ostream& os, const RunConfig& rc);
void write_run_config_file(const std::string& path, const RunConfig& rc);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace ssmix
