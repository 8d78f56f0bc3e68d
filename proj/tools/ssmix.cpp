// ssmix — train, evaluate and unmix hyperspectral cubes with a selective
// state-space classifier that shares its features with an unmixing branch.
//
// Subcommands:
//   synth   generate a synthetic labelled cube with ground-truth mixing
//   train   fit the full multi-task model, writing checkpoint + history
//   eval    score a checkpoint and emit maps, plots and metrics.json
//   unmix   fit the unmixing branch alone on a raw cube
//
// Exit codes: 0 success, 1 validation/config/I-O error, 2 training divergence.
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssmix/commands.hpp"
#include "ssmix/run_config.hpp"

namespace {

// Flags shared by train/eval/unmix that override values from --config.
struct Overrides {
  std::string config_path;
  std::string cube, labels, truth_endmembers, truth_abundance;
  std::string out_dir;
  bool force = false;
  std::int64_t epochs = -1;
  std::int64_t endmembers = -1;
  std::int64_t seed = -1;
  std::int64_t split_seed = -1;
  double lambda = -1.0;
  std::vector<std::string> ablations;
};

void add_override_flags(CLI::App* cmd, Overrides& ov, bool with_labels) {
  cmd->add_option("--config", ov.config_path, "INI run configuration file");
  cmd->add_option("--cube", ov.cube, "cube path (.arr container or ENVI .hdr)");
  if (with_labels) {
    cmd->add_option("--labels", ov.labels, "label map container");
    cmd->add_option("--truth-endmembers", ov.truth_endmembers,
                    "ground-truth endmember array for metrics");
    cmd->add_option("--truth-abundance", ov.truth_abundance,
                    "ground-truth abundance array for metrics");
  }
  cmd->add_option("-o,--out", ov.out_dir, "output directory");
  cmd->add_flag("--force", ov.force, "overwrite an existing output directory");
  cmd->add_option("--epochs", ov.epochs, "training epochs");
  cmd->add_option("--P", ov.endmembers, "number of endmembers");
  cmd->add_option("--seed", ov.seed, "parameter initialisation seed");
  cmd->add_option("--split-seed", ov.split_seed, "train/val/test split seed");
  cmd->add_option("--lambda", ov.lambda, "token budget scale");
  cmd->add_option("--ablate", ov.ablations,
                  "ablation switch, repeatable: no_topk | no_pos_um | no_pos_cls |"
                  " no_variability | freeze_endmembers")
      ->allow_extra_args(false);
}

ssmix::RunConfig build_run_config(const Overrides& ov) {
  ssmix::RunConfig rc;
  if (!ov.config_path.empty()) rc = ssmix::parse_run_config_file(ov.config_path);
  if (!ov.cube.empty()) rc.cube = ov.cube;
  if (!ov.labels.empty()) rc.labels = ov.labels;
  if (!ov.truth_endmembers.empty()) rc.truth_endmembers = ov.truth_endmembers;
  if (!ov.truth_abundance.empty()) rc.truth_abundance = ov.truth_abundance;
  if (!ov.out_dir.empty()) rc.out_dir = ov.out_dir;
  if (ov.force) rc.force = true;
  if (ov.epochs >= 0) rc.epochs = static_cast<std::size_t>(ov.epochs);
  if (ov.endmembers >= 0) rc.endmembers = static_cast<std::size_t>(ov.endmembers);
  if (ov.seed >= 0) rc.seed = static_cast<std::uint64_t>(ov.seed);
  if (ov.split_seed >= 0) rc.split_seed = static_cast<std::uint64_t>(ov.split_seed);
  if (ov.lambda >= 0.0) rc.lambda = ov.lambda;
  for (const std::string& a : ov.ablations) {
    if (a == "no_topk") {
      rc.no_topk = true;
    } else if (a == "no_pos_um") {
      rc.no_pos_um = true;
    } else if (a == "no_pos_cls") {
      rc.no_pos_cls = true;
    } else if (a == "no_variability") {
      rc.no_variability = true;
    } else if (a == "freeze_endmembers") {
      rc.freeze_endmembers = true;
    } else {
      throw std::invalid_argument("unknown ablation '" + a + "'");
    }
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selective state-space hyperspectral classifier + unmixer"};
  app.require_subcommand(1);

  // synth
  ssmix::SynthOptions sopt;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labelled cube");
  synth->add_option("--P", sopt.endmembers, "endmember count")->capture_default_str();
  synth->add_option("--size", sopt.size, "scene side length (H = W)")
      ->capture_default_str();
  synth->add_option("--bands", sopt.bands, "spectral band count")->capture_default_str();
  synth->add_option("--snr", sopt.snr_db, "additive noise SNR in dB (positive)")
      ->capture_default_str();
  synth->add_option("--seed", sopt.seed, "generator seed")->capture_default_str();
  synth->add_option("-o,--out", sopt.out_dir, "output directory")->required();
  synth->add_flag("--force", sopt.force, "overwrite an existing output directory");
  bool no_envi = false;
  synth->add_flag("--no-envi", no_envi, "skip the ENVI mirror of the cube");

  // train
  Overrides tov;
  CLI::App* train = app.add_subcommand("train", "train the full multi-task model");
  add_override_flags(train, tov, /*with_labels=*/true);

  // eval
  Overrides eov;
  std::string checkpoint_dir, split_name = "test";
  CLI::App* eval = app.add_subcommand("eval", "evaluate a trained checkpoint");
  add_override_flags(eval, eov, /*with_labels=*/true);
  eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("--split", split_name, "pixel subset: train | val | test | all")
      ->capture_default_str();

  // unmix
  Overrides uov;
  CLI::App* unmix = app.add_subcommand("unmix", "train the unmixing branch alone");
  add_override_flags(unmix, uov, /*with_labels=*/false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      sopt.envi_mirror = !no_envi;
      return ssmix::cmd_synth(sopt);
    }
    if (train->parsed()) return ssmix::cmd_train(build_run_config(tov));
    if (eval->parsed()) {
      return ssmix::cmd_eval(build_run_config(eov), checkpoint_dir, split_name);
    }
    if (unmix->parsed()) return ssmix::cmd_unmix(build_run_config(uov));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ssmix::kExitUsage;
  }
  return ssmix::kExitUsage;
}
