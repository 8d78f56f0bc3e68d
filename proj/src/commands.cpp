#include "ssmix/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssmix/array_io.hpp"
#include "ssmix/envi.hpp"
#include "ssmix/hsi_data.hpp"
#include "ssmix/image_io.hpp"
#include "ssmix/metrics.hpp"
#include "ssmix/model.hpp"
#include "ssmix/train.hpp"
#include "ssmix/unmixing.hpp"

namespace ssmix {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Creates the output directory, honouring --force for pre-existing ones.
fs::path prepare_out_dir(const std::string& dir, bool force) {
  if (dir.empty()) throw std::invalid_argument("an output directory is required (-o)");
  fs::path p(resolve_output_dir(dir));
  if (fs::exists(p)) {
    if (!force) {
      throw std::invalid_argument("output directory " + p.string() +
                                  " exists; pass --force to overwrite");
    }
  } else {
    fs::create_directories(p);
  }
  return p;
}

// Raw (unnormalised) cube from either the array container or an ENVI header.
HsiCube load_cube_raw(const std::string& path) {
  Tensor chw;
  if (path.size() > 4 && path.substr(path.size() - 4) == ".hdr") {
    EnviHeader h = parse_envi_header(path);
    std::string raw = path.substr(0, path.size() - 4) + ".raw";
    chw = read_envi_raw(h, raw);
  } else {
    chw = load_array(path);
  }
  if (chw.ndim() != 3) {
    throw std::runtime_error("cube data must be rank 3 [bands,height,width], got " +
                             shape_str(chw.shape()));
  }
  HsiCube c;
  c.bands = chw.dim(0);
  c.height = chw.dim(1);
  c.width = chw.dim(2);
  c.values = chw.reshaped(Shape{c.bands, c.height * c.width});
  return c;
}

HsiCube load_cube_for_classification(const std::string& path) {
  HsiCube c = load_cube_raw(path);
  c.values = normalize_bands(c.values);
  return c;
}

std::vector<std::uint8_t> mask_for_split(const SplitMasks& split, const std::string& name,
                                         const LabelMap& labels) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  if (name == "all") {
    std::vector<std::uint8_t> all(labels.labels.size(), 0);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = labels.labels[i] > 0 ? 1 : 0;
    return all;
  }
  throw std::invalid_argument("unknown split '" + name + "' (train|val|test|all)");
}

void write_endmember_csv(const std::string& path, const Tensor& spectra /* [P,C] */) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  const std::size_t P = spectra.dim(0), C = spectra.dim(1);
  f << "endmember";
  for (std::size_t c = 0; c < C; ++c) f << ",band_" << c;
  f << "\n";
  for (std::size_t p = 0; p < P; ++p) {
    f << p;
    for (std::size_t c = 0; c < C; ++c) f << ',' << g17(spectra.at({p, c}));
    f << "\n";
  }
}

void write_abundance_outputs(const fs::path& out, const Tensor& abundance /* [P,N] */,
                             std::size_t height, std::size_t width) {
  const std::size_t P = abundance.dim(0);
  save_array((out / "abundance.arr").string(),
             abundance.reshaped({P, height, width}));
  for (std::size_t p = 0; p < P; ++p) {
    write_gray_png((out / ("abundance_" + std::to_string(p) + ".png")).string(),
                   abundance.data() + p * height * width, height, width);
  }
}

// Per-pixel spectral angle between the input and its reconstruction.
Tensor reconstruction_angle_map(const Tensor& cube, const Tensor& recon, std::size_t height,
                                std::size_t width) {
  const std::size_t C = cube.dim(0), N = cube.dim(1);
  Tensor map(Shape{height, width});
  std::vector<double> a(C), b(C);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      a[c] = cube[c * N + n];
      b[c] = recon[c * N + n];
    }
    double na = 0, nb = 0;
    for (std::size_t c = 0; c < C; ++c) {
      na += a[c] * a[c];
      nb += b[c] * b[c];
    }
    map[n] = (na == 0.0 || nb == 0.0) ? 3.14159265358979323846 / 2.0
                                      : spectral_angle(a.data(), b.data(), C);
  }
  return map;
}

}  // namespace

std::string resolve_output_dir(const std::string& dir) {
  const char* root = std::getenv("SSMIX_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0') return dir;
  fs::path p(dir);
  if (p.is_absolute()) return dir;
  return (fs::path(root) / p).string();
}

int cmd_synth(const SynthOptions& opt) {
  if (!(opt.snr_db > 0.0)) {
    throw std::invalid_argument("--snr must be positive (got " + g17(opt.snr_db) + ")");
  }
  if (opt.endmembers < 2) throw std::invalid_argument("--P must be at least 2");
  if (opt.bands <= opt.endmembers) {
    throw std::invalid_argument("--bands must exceed --P for extreme-pixel seeding");
  }
  fs::path out = prepare_out_dir(opt.out_dir, opt.force);

  SyntheticData d = generate_synthetic_cube(opt.endmembers, opt.bands, opt.size, opt.size,
                                            opt.snr_db, opt.seed);
  Tensor chw = d.cube.values.reshaped({opt.bands, opt.size, opt.size});
  save_array((out / "cube.arr").string(), chw);
  save_labels((out / "labels.arr").string(), d.labels);
  save_array((out / "truth_endmembers.arr").string(), d.truth.endmembers);
  save_array((out / "truth_abundance.arr").string(), d.truth.abundance);
  if (opt.envi_mirror) {
    write_envi((out / "cube.hdr").string(), (out / "cube.raw").string(), chw, "bsq");
  }

  std::ofstream meta(out / "synth.ini");
  meta << "[synth]\n"
       << "P = " << opt.endmembers << "\n"
       << "size = " << opt.size << "\n"
       << "bands = " << opt.bands << "\n"
       << "snr = " << g17(opt.snr_db) << "\n"
       << "seed = " << opt.seed << "\n";
  std::cout << "wrote " << out.string() << ": cube.arr, labels.arr, truth_endmembers.arr,"
            << " truth_abundance.arr" << (opt.envi_mirror ? ", cube.hdr/raw" : "") << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& rc) {
  if (rc.cube.empty()) throw std::invalid_argument("train: data.cube is required");
  if (rc.labels.empty()) throw std::invalid_argument("train: data.labels is required");
  fs::path out = prepare_out_dir(rc.out_dir, rc.force);

  HsiCube cube = load_cube_for_classification(rc.cube);
  LabelMap labels = load_labels(rc.labels);
  if (labels.height != cube.height || labels.width != cube.width) {
    throw std::invalid_argument("train: label grid does not match the cube");
  }
  const auto num_classes = static_cast<std::size_t>(labels.num_classes());
  SplitMasks split = stratified_split(labels, rc.train_frac, rc.val_frac, rc.split_seed);

  ModelConfig mc = rc.model_config(cube.bands, cube.height, cube.width, num_classes);
  Model m = make_model_from_cube(mc, cube.values);

  write_run_config_file((out / "effective.ini").string(), rc);
  TrainResult r = train_model(m, cube.values, labels, split, rc.train_config());
  write_history_csv((out / "history.csv").string(), r.history);

  if (r.diverged) {
    std::cerr << "training diverged at epoch " << r.diverged_epoch << "\n";
    if (r.best_val_oa > 0.0 || !r.history.empty()) {
      // Keep the partial history for post-mortems, but only checkpoint when a
      // finite epoch completed.
      if (r.history.size() > 1) {
        save_checkpoint(m, (out / "checkpoint").string(), r.best_epoch, r.best_val_oa);
      }
    }
    return kExitDiverged;
  }

  save_checkpoint(m, (out / "checkpoint").string(), r.best_epoch, r.best_val_oa);
  std::cout << "trained " << rc.epochs << " epochs; best val OA " << g17(r.best_val_oa)
            << " at epoch " << r.best_epoch << "; wrote " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& rc, const std::string& checkpoint_dir,
             const std::string& split_name) {
  if (rc.cube.empty()) throw std::invalid_argument("eval: data.cube is required");
  if (rc.labels.empty()) throw std::invalid_argument("eval: data.labels is required");
  fs::path out = prepare_out_dir(rc.out_dir, rc.force);

  std::size_t ckpt_epoch = 0;
  double ckpt_best = 0.0;
  Model m = load_checkpoint(checkpoint_dir, &ckpt_epoch, &ckpt_best);

  HsiCube cube = load_cube_for_classification(rc.cube);
  LabelMap labels = load_labels(rc.labels);
  const ModelConfig& mc = m.config();
  if (mc.bands != cube.bands || mc.height != cube.height || mc.width != cube.width) {
    throw std::invalid_argument(
        "eval: checkpoint geometry [" + std::to_string(mc.bands) + "," +
        std::to_string(mc.height) + "," + std::to_string(mc.width) +
        "] does not match the cube [" + std::to_string(cube.bands) + "," +
        std::to_string(cube.height) + "," + std::to_string(cube.width) + "]");
  }
  if (static_cast<std::size_t>(labels.num_classes()) > mc.num_classes) {
    throw std::invalid_argument("eval: labels use more classes than the checkpoint head");
  }
  SplitMasks split = stratified_split(labels, rc.train_frac, rc.val_frac, rc.split_seed);
  std::vector<std::uint8_t> mask = mask_for_split(split, split_name, labels);

  Tape t;
  ForwardOptions fo;
  fo.gamma = temporal_gamma(ckpt_epoch);
  ForwardResult f = m.forward(t, cube.values, fo);

  std::vector<std::int32_t> pred = predict_labels(f.logits.value());
  Confusion conf = confusion_matrix(labels.labels, pred, mask, mc.num_classes);

  json rep;
  rep["split"] = split_name;
  rep["pixels"] = conf.total;
  rep["checkpoint_epoch"] = ckpt_epoch;
  rep["checkpoint_val_oa"] = ckpt_best;
  rep["oa"] = overall_accuracy(conf);
  rep["aa"] = average_accuracy(conf);
  rep["kappa"] = kappa(conf);
  {
    json per = json::array(), rows = json::array();
    for (std::size_t c = 0; c < mc.num_classes; ++c) {
      std::uint64_t support = 0, correct = conf.at(c, c);
      json row = json::array();
      for (std::size_t p = 0; p < mc.num_classes; ++p) {
        support += conf.at(c, p);
        row.push_back(conf.at(c, p));
      }
      per.push_back(support == 0
                        ? json(nullptr)
                        : json(static_cast<double>(correct) / static_cast<double>(support)));
      rows.push_back(row);
    }
    rep["per_class_accuracy"] = per;
    rep["confusion"] = rows;
  }
  {
    json budgets = json::array();
    for (std::size_t k : f.plan.budgets) budgets.push_back(k);
    rep["token_budgets"] = budgets;
    rep["scanned_tokens"] = f.scanned;
  }

  // Unmixing metrics against ground truth, when provided.
  if (!rc.truth_endmembers.empty() && !rc.truth_abundance.empty()) {
    Tensor te = load_array(rc.truth_endmembers);
    Tensor ta = load_array(rc.truth_abundance);
    UnmixMetrics um =
        unmixing_metrics(te, m.endmember_bank().mean_spectra(), ta, f.abundance.value());
    rep["unmixing"]["mean_sad"] = um.mean_sad;
    rep["unmixing"]["abundance_rmse"] = um.abundance_rmse;
    json perm = json::array();
    for (std::size_t p : um.assignment) perm.push_back(p);
    rep["unmixing"]["assignment"] = perm;
  }

  {
    std::ofstream mf(out / "metrics.json");
    mf << rep.dump(2) << "\n";
  }
  write_class_map_png((out / "classification_map.png").string(), pred, cube.height,
                      cube.width);
  write_abundance_outputs(out, f.abundance.value(), cube.height, cube.width);
  write_spectra_png((out / "endmembers.png").string(), m.endmember_bank().mean_spectra());
  write_endmember_csv((out / "endmembers.csv").string(), m.endmember_bank().mean_spectra());
  {
    std::ofstream pf(out / "tokenplan.jsonl");
    dump_plan_jsonl(f.plan, pf);
  }
  std::cout << "evaluated " << conf.total << " " << split_name << " pixels: OA "
            << g17(rep["oa"].get<double>()) << ", wrote " << out.string() << "\n";
  return kExitOk;
}

int cmd_unmix(const RunConfig& rc) {
  if (rc.cube.empty()) throw std::invalid_argument("unmix: data.cube is required");
  fs::path out = prepare_out_dir(rc.out_dir, rc.force);

  // Unmixing runs on the raw cube so the recovered spectra stay in input units.
  HsiCube cube = load_cube_raw(rc.cube);
  if (rc.endmembers >= cube.bands) {
    throw std::invalid_argument("unmix: endmember count " + std::to_string(rc.endmembers) +
                                " must be below the band count " +
                                std::to_string(cube.bands));
  }

  // The classifier head is still constructed (smallest legal size) but never
  // trained or evaluated here.
  ModelConfig mc = rc.model_config(cube.bands, cube.height, cube.width, 2);
  Model m = make_model_from_cube(mc, cube.values);

  write_run_config_file((out / "effective.ini").string(), rc);
  UnmixTrainResult r = train_unmix_only(m, cube.values, rc.train_config());
  write_unmix_history_csv((out / "unmix_history.csv").string(), r.history);
  if (r.diverged) {
    std::cerr << "unmixing training diverged at epoch " << r.diverged_epoch << "\n";
    return kExitDiverged;
  }

  Tape t;
  UnmixForward f = m.unmix_forward(t, cube.values);
  write_abundance_outputs(out, f.abundance.value(), cube.height, cube.width);
  Tensor mean_spectra = m.endmember_bank().mean_spectra();
  write_endmember_csv((out / "endmembers.csv").string(), mean_spectra);
  save_array((out / "endmembers.arr").string(), mean_spectra);
  write_spectra_png((out / "endmembers.png").string(), mean_spectra);

  Tensor angle = reconstruction_angle_map(cube.values, f.recon.value(), cube.height,
                                          cube.width);
  save_array((out / "recon_sad.arr").string(), angle);
  // Qualitative view: scale by the worst pixel so structure stays visible.
  Tensor scaled = angle;
  const double mx = angle.max();
  if (mx > 0.0) {
    for (std::size_t i = 0; i < scaled.numel(); ++i) scaled[i] /= mx;
  }
  write_gray_png((out / "recon_sad.png").string(), scaled.data(), cube.height, cube.width);

  // Summary metrics, with ground truth when available.
  json rep;
  rep["epochs"] = r.history.size();
  rep["final_sad"] = r.history.empty() ? 0.0 : r.history.back().sad;
  rep["mean_recon_angle"] = angle.mean();
  if (!rc.truth_endmembers.empty() && !rc.truth_abundance.empty()) {
    Tensor te = load_array(rc.truth_endmembers);
    Tensor ta = load_array(rc.truth_abundance);
    UnmixMetrics um = unmixing_metrics(te, mean_spectra, ta, f.abundance.value());
    rep["mean_sad_vs_truth"] = um.mean_sad;
    rep["abundance_rmse_vs_truth"] = um.abundance_rmse;
  }
  {
    std::ofstream mf(out / "unmix_metrics.json");
    mf << rep.dump(2) << "\n";
  }
  std::cout << "unmixed " << cube.pixels() << " pixels over " << r.history.size()
            << " epochs; wrote " << out.string() << "\n";
  return kExitOk;
}

}  // namespace ssmix
