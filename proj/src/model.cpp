#include "ssmix/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "ssmix/array_io.hpp"

namespace ssmix {

namespace fs = std::filesystem;
using nlohmann::json;

void ModelConfig::validate() const {
  if (bands == 0 || height == 0 || width == 0)
    throw std::invalid_argument("model config: bands/height/width must be positive");
  if (num_classes < 2)
    throw std::invalid_argument("model config: need at least two classes");
  if (dim == 0 || endmembers == 0 || state == 0)
    throw std::invalid_argument("model config: dim/endmembers/state must be positive");
  if (variants == 0)
    throw std::invalid_argument("model config: variants must be positive");
  if (groups == 0 || dim % groups != 0)
    throw std::invalid_argument("model config: groups must divide dim");
  if (lambda <= 0.0 || alpha < 0.0 || beta < 0.0)
    throw std::invalid_argument("model config: invalid budget weights");
  if (tau < 0.0 || tau >= 1.0)
    throw std::invalid_argument("model config: tau must lie in [0, 1)");
}

namespace {

ModelConfig normalized(ModelConfig cfg) {
  if (cfg.no_variability) cfg.variants = 1;
  cfg.validate();
  return cfg;
}

}  // namespace

Model::Model(const ModelConfig& cfg, const Tensor& initial_endmembers)
    : cfg_(normalized(cfg)) {
  if (initial_endmembers.shape() != Shape{cfg_.endmembers, cfg_.bands}) {
    throw std::invalid_argument("model: initial endmembers must be [P, C]");
  }
  Rng rng(cfg_.seed);
  const std::size_t D = cfg_.dim, P = cfg_.endmembers;

  // Classification-path parameters.
  embed_ = nn::make_linear(params_, "embed", cfg_.bands, D, nn::kGroupClassification, rng);
  embed_bn_ = nn::make_batchnorm(params_, "embed.bn", D, nn::kGroupClassification);
  if (!cfg_.no_pos_cls) {
    gate_cls_ = make_positional_gate(params_, "gate_cls", PosFlavor::kClassify, D,
                                     cfg_.height, cfg_.width, nn::kGroupClassification,
                                     rng);
  }
  spatial_ = make_cluster_scan_set(params_, "spatial", P, D, cfg_.state,
                                   nn::kGroupClassification, rng);
  spectral_ = make_cluster_scan_set(params_, "spectral", P, D / cfg_.groups, cfg_.state,
                                    nn::kGroupClassification, rng);
  fusion_ = nn::make_linear(params_, "fusion", D, D, nn::kGroupClassification, rng);
  cls_head_ = nn::make_linear(params_, "head", D + P, cfg_.num_classes,
                              nn::kGroupClassification, rng);

  // Unmixing-path parameters.
  if (!cfg_.no_pos_um) {
    gate_um_ = make_positional_gate(params_, "gate_um", PosFlavor::kUnmix, D,
                                    cfg_.height, cfg_.width, nn::kGroupUnmixing, rng);
  }
  abu_head_ = make_abundance_head(params_, "abu", D, P, nn::kGroupUnmixing, rng);
  var_head_ = make_variability_head(params_, "variants", P, cfg_.variants,
                                    nn::kGroupUnmixing, rng);
  bank_ = make_endmember_bank(params_, "endmembers", initial_endmembers, cfg_.variants,
                              nn::kGroupUnmixing, !cfg_.freeze_endmembers);

  abu_state_.tau = cfg_.tau;
  pos_um_ = positional_codes(cfg_.height, cfg_.width, PosFlavor::kUnmix);
  pos_cls_ = positional_codes(cfg_.height, cfg_.width, PosFlavor::kClassify);
}

UnmixForward Model::unmix_forward(Tape& t, const Tensor& cube) {
  if (cube.shape() != Shape{cfg_.bands, cfg_.height * cfg_.width}) {
    throw std::invalid_argument("model: cube must be [C, H*W] matching the config");
  }
  UnmixForward r;
  r.shared = embed_bn_(t, embed_(t, t.constant(cube)));
  r.features = cfg_.no_pos_um ? r.shared : gate_um_(t, r.shared, pos_um_);
  r.f_abu = abu_head_(t, r.features);
  r.abundance = abs_normalize_cols(r.f_abu);
  r.weights = var_head_(t, r.f_abu);
  r.recon = reconstruct_mixture(r.abundance, bank_.clamped(t), r.weights);
  return r;
}

ForwardResult Model::forward(Tape& t, const Tensor& cube, const ForwardOptions& opt) {
  ForwardResult r;
  UnmixForward um = unmix_forward(t, cube);
  r.features = um.features;
  r.f_abu = um.f_abu;
  r.abundance = um.abundance;
  r.weights = um.weights;
  r.recon = um.recon;

  // Temporal abundance for token budgeting; selection itself is not
  // differentiated, so it reads plain tensor values.
  if (opt.update_ema) {
    update_temporal_abundance(abu_state_, r.abundance.value(), opt.gamma);
    r.a_temp = abu_state_.blended;
  } else {
    r.a_temp = peek_temporal_abundance(abu_state_, r.abundance.value(), opt.gamma);
  }

  if (opt.forced_plan != nullptr) {
    r.plan = *opt.forced_plan;
  } else if (cfg_.no_topk) {
    r.plan = full_raster_plan(cfg_.endmembers, cfg_.height, cfg_.width);
  } else {
    r.plan = select_tokens(r.a_temp, cfg_.height, cfg_.width, cfg_.lambda, cfg_.alpha,
                           cfg_.beta);
  }
  if (!r.plan.full_raster) {
    // Simplex abundances bound every plane by 1, so the combined budget can
    // never exceed lambda*(alpha+beta)*H*W*P; a violation means the selection
    // logic is broken.
    double total = 0.0;
    for (std::size_t k : r.plan.budgets) total += static_cast<double>(k);
    const double bound = cfg_.lambda * (cfg_.alpha + cfg_.beta) *
                         static_cast<double>(cfg_.height * cfg_.width) *
                         static_cast<double>(cfg_.endmembers);
    if (total > bound + 1e-9) {
      throw std::logic_error("model: token budget invariant violated");
    }
  }

  Var f_cls = cfg_.no_pos_cls ? um.shared : gate_cls_(t, um.shared, pos_cls_);
  std::size_t scanned_spatial = 0, scanned_spectral = 0;
  Var spa = cluster_scan_spatial(t, f_cls, r.plan, spatial_, &scanned_spatial);
  Var spe = cluster_scan_spectral(t, f_cls, r.plan, spectral_, cfg_.groups,
                                  &scanned_spectral);
  r.scanned = scanned_spatial + scanned_spectral;
  Var fused = fusion_(t, add(spa, spe));
  r.logits = cls_head_(t, concat0(fused, r.abundance));
  return r;
}

Model::Snapshot Model::snapshot() const {
  Snapshot s;
  s.values.reserve(params_.count());
  for (const auto& p : params_.items()) s.values.push_back(p->value);
  s.abu = abu_state_;
  return s;
}

void Model::restore(const Snapshot& s) {
  if (s.values.size() != params_.count()) {
    throw std::invalid_argument("model: snapshot does not match parameter count");
  }
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    params_.items()[i]->value = s.values[i];
  }
  abu_state_ = s.abu;
}

Model make_model_from_cube(const ModelConfig& cfg, const Tensor& cube) {
  ModelConfig n = cfg;
  if (n.no_variability) n.variants = 1;
  n.validate();
  VcaResult v = vca(cube, n.endmembers, n.seed);
  return Model(n, v.spectra);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"bands", c.bands},
              {"height", c.height},
              {"width", c.width},
              {"num_classes", c.num_classes},
              {"dim", c.dim},
              {"endmembers", c.endmembers},
              {"variants", c.variants},
              {"groups", c.groups},
              {"state", c.state},
              {"lambda", c.lambda},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"tau", c.tau},
              {"seed", c.seed},
              {"no_pos_um", c.no_pos_um},
              {"no_pos_cls", c.no_pos_cls},
              {"no_topk", c.no_topk},
              {"no_variability", c.no_variability},
              {"freeze_endmembers", c.freeze_endmembers}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.bands = j.at("bands").get<std::size_t>();
  c.height = j.at("height").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.endmembers = j.at("endmembers").get<std::size_t>();
  c.variants = j.at("variants").get<std::size_t>();
  c.groups = j.at("groups").get<std::size_t>();
  c.state = j.at("state").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.tau = j.at("tau").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.no_pos_um = j.at("no_pos_um").get<bool>();
  c.no_pos_cls = j.at("no_pos_cls").get<bool>();
  c.no_topk = j.at("no_topk").get<bool>();
  c.no_variability = j.at("no_variability").get<bool>();
  c.freeze_endmembers = j.at("freeze_endmembers").get<bool>();
  return c;
}

std::string param_file_name(const std::string& name) { return name + ".arr"; }

}  // namespace

void save_checkpoint(const Model& m, const std::string& dir, std::size_t epoch,
                     double best_val_oa) {
  fs::create_directories(fs::path(dir) / "params");
  json manifest;
  manifest["format"] = "ssmix-checkpoint-1";
  manifest["config"] = config_to_json(m.config());
  manifest["epoch"] = epoch;
  manifest["best_val_oa"] = best_val_oa;

  json plist = json::array();
  for (const auto& p : m.params().items()) {
    save_array((fs::path(dir) / "params" / param_file_name(p->name)).string(), p->value);
    json pj;
    pj["name"] = p->name;
    pj["group"] = p->group;
    pj["trainable"] = p->trainable;
    pj["shape"] = p->value.shape();
    plist.push_back(std::move(pj));
  }
  manifest["params"] = std::move(plist);

  const AbundanceState& st = m.abundance_state();
  manifest["abundance_state"] = json{{"initialized", st.initialized},
                                     {"epochs_applied", st.epochs_applied},
                                     {"tau", st.tau}};
  if (st.initialized) {
    save_array((fs::path(dir) / "ema.arr").string(), st.ema);
    save_array((fs::path(dir) / "blended.arr").string(), st.blended);
  }

  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

Model load_checkpoint(const std::string& dir, std::size_t* epoch, double* best_val_oa) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("checkpoint: missing manifest.json in " + dir);
  json manifest = json::parse(f);
  if (manifest.at("format").get<std::string>() != "ssmix-checkpoint-1") {
    throw std::runtime_error("checkpoint: unsupported format tag");
  }
  ModelConfig cfg = config_from_json(manifest.at("config"));
  Model m(cfg, Tensor(Shape{cfg.endmembers, cfg.bands}, 0.0));

  const json& plist = manifest.at("params");
  if (plist.size() != m.params().count()) {
    throw std::runtime_error("checkpoint: parameter list does not match the model");
  }
  for (const auto& pj : plist) {
    const std::string name = pj.at("name").get<std::string>();
    nn::Param* p = m.params().find(name);
    if (p == nullptr) {
      throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
    }
    Tensor v = load_array((fs::path(dir) / "params" / param_file_name(name)).string());
    if (v.shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for parameter '" + name + "'");
    }
    p->value = std::move(v);
  }

  const json& ast = manifest.at("abundance_state");
  AbundanceState& st = m.abundance_state();
  st.tau = ast.at("tau").get<double>();
  st.epochs_applied = ast.at("epochs_applied").get<std::size_t>();
  st.initialized = ast.at("initialized").get<bool>();
  if (st.initialized) {
    st.ema = load_array((fs::path(dir) / "ema.arr").string());
    st.blended = load_array((fs::path(dir) / "blended.arr").string());
  }

  if (epoch != nullptr) *epoch = manifest.at("epoch").get<std::size_t>();
  if (best_val_oa != nullptr) *best_val_oa = manifest.at("best_val_oa").get<double>();
  return m;
}

}  // namespace ssmix
