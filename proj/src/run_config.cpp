#include "ssmix/run_config.hpp"

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ssmix/array_io.hpp"

namespace ssmix {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: '" + v + "' is not a boolean (" + where + ")");
}

double parse_double(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing junk");
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + v + "' is not a number (" + where + ")");
  }
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  try {
    std::size_t used = 0;
    unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing junk");
    return u;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + v + "' is not a nonnegative integer (" +
                                where + ")");
  }
}

std::size_t parse_size(const std::string& v, const std::string& where) {
  return static_cast<std::size_t>(parse_u64(v, where));
}

// key -> setter, flattened as "section.key".
using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.cube", [](RunConfig& c, const std::string& v, const std::string&) { c.cube = v; }},
      {"data.labels",
       [](RunConfig& c, const std::string& v, const std::string&) { c.labels = v; }},
      {"data.truth_endmembers",
       [](RunConfig& c, const std::string& v, const std::string&) { c.truth_endmembers = v; }},
      {"data.truth_abundance",
       [](RunConfig& c, const std::string& v, const std::string&) { c.truth_abundance = v; }},
      {"data.train_frac", [](RunConfig& c, const std::string& v,
                             const std::string& w) { c.train_frac = parse_double(v, w); }},
      {"data.val_frac", [](RunConfig& c, const std::string& v,
                           const std::string& w) { c.val_frac = parse_double(v, w); }},
      {"data.split_seed", [](RunConfig& c, const std::string& v,
                             const std::string& w) { c.split_seed = parse_u64(v, w); }},

      {"model.dim", [](RunConfig& c, const std::string& v,
                       const std::string& w) { c.dim = parse_size(v, w); }},
      {"model.endmembers", [](RunConfig& c, const std::string& v,
                              const std::string& w) { c.endmembers = parse_size(v, w); }},
      {"model.variants", [](RunConfig& c, const std::string& v,
                            const std::string& w) { c.variants = parse_size(v, w); }},
      {"model.groups", [](RunConfig& c, const std::string& v,
                          const std::string& w) { c.groups = parse_size(v, w); }},
      {"model.state", [](RunConfig& c, const std::string& v,
                         const std::string& w) { c.state = parse_size(v, w); }},
      {"model.lambda", [](RunConfig& c, const std::string& v,
                          const std::string& w) { c.lambda = parse_double(v, w); }},
      {"model.alpha", [](RunConfig& c, const std::string& v,
                         const std::string& w) { c.alpha = parse_double(v, w); }},
      {"model.beta", [](RunConfig& c, const std::string& v,
                        const std::string& w) { c.beta = parse_double(v, w); }},
      {"model.tau", [](RunConfig& c, const std::string& v,
                       const std::string& w) { c.tau = parse_double(v, w); }},
      {"model.seed", [](RunConfig& c, const std::string& v,
                        const std::string& w) { c.seed = parse_u64(v, w); }},

      {"train.epochs", [](RunConfig& c, const std::string& v,
                          const std::string& w) { c.epochs = parse_size(v, w); }},
      {"train.lr_cls", [](RunConfig& c, const std::string& v,
                          const std::string& w) { c.lr_cls = parse_double(v, w); }},
      {"train.lr_um", [](RunConfig& c, const std::string& v,
                         const std::string& w) { c.lr_um = parse_double(v, w); }},
      {"train.lr_decay", [](RunConfig& c, const std::string& v,
                            const std::string& w) { c.lr_decay = parse_double(v, w); }},
      {"train.lr_decay_every",
       [](RunConfig& c, const std::string& v, const std::string& w) {
         c.lr_decay_every = parse_size(v, w);
       }},
      {"train.sad_weight", [](RunConfig& c, const std::string& v,
                              const std::string& w) { c.sad_weight = parse_double(v, w); }},
      {"train.sparsity_weight",
       [](RunConfig& c, const std::string& v, const std::string& w) {
         c.sparsity_weight = parse_double(v, w);
       }},
      {"train.verbose", [](RunConfig& c, const std::string& v,
                           const std::string& w) { c.verbose = parse_bool(v, w); }},

      {"ablation.no_pos_um", [](RunConfig& c, const std::string& v,
                                const std::string& w) { c.no_pos_um = parse_bool(v, w); }},
      {"ablation.no_pos_cls", [](RunConfig& c, const std::string& v,
                                 const std::string& w) { c.no_pos_cls = parse_bool(v, w); }},
      {"ablation.no_topk", [](RunConfig& c, const std::string& v,
                              const std::string& w) { c.no_topk = parse_bool(v, w); }},
      {"ablation.no_variability",
       [](RunConfig& c, const std::string& v, const std::string& w) {
         c.no_variability = parse_bool(v, w);
       }},
      {"ablation.freeze_endmembers",
       [](RunConfig& c, const std::string& v, const std::string& w) {
         c.freeze_endmembers = parse_bool(v, w);
       }},

      {"output.dir", [](RunConfig& c, const std::string& v, const std::string&) { c.out_dir = v; }},
      {"output.force", [](RunConfig& c, const std::string& v,
                          const std::string& w) { c.force = parse_bool(v, w); }},
      {"output.envi_mirror", [](RunConfig& c, const std::string& v,
                                const std::string& w) { c.envi_mirror = parse_bool(v, w); }},
  };
  return table;
}

}  // namespace

ModelConfig RunConfig::model_config(std::size_t bands, std::size_t height,
                                    std::size_t width, std::size_t num_classes) const {
  ModelConfig m;
  m.bands = bands;
  m.height = height;
  m.width = width;
  m.num_classes = num_classes;
  m.dim = dim;
  m.endmembers = endmembers;
  m.variants = variants;
  m.groups = groups;
  m.state = state;
  m.lambda = lambda;
  m.alpha = alpha;
  m.beta = beta;
  m.tau = tau;
  m.seed = seed;
  m.no_pos_um = no_pos_um;
  m.no_pos_cls = no_pos_cls;
  m.no_topk = no_topk;
  m.no_variability = no_variability;
  m.freeze_endmembers = freeze_endmembers;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.lr_cls = lr_cls;
  t.lr_um = lr_um;
  t.lr_decay = lr_decay;
  t.lr_decay_every = lr_decay_every;
  t.sad_weight = sad_weight;
  t.sparsity_weight = sparsity_weight;
  t.verbose = verbose;
  return t;
}

RunConfig parse_run_config_text(const std::string& text, const RunConfig& base) {
  RunConfig rc = base;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "line " + std::to_string(lineno);
    std::size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config: unterminated section header at " + where);
      }
      section = trim(line.substr(1, line.size() - 2));
      if (setters().lower_bound(section + ".") == setters().end() ||
          setters().lower_bound(section + ".")->first.rfind(section + ".", 0) != 0) {
        throw std::invalid_argument("config: unknown section [" + section + "] at " + where);
      }
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected 'key = value' at " + where + ": '" +
                                  line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw std::invalid_argument("config: key '" + key + "' appears before any section (" +
                                  where + ")");
    }
    auto it = setters().find(section + "." + key);
    if (it == setters().end()) {
      throw std::invalid_argument("config: unknown key '" + key + "' in section [" +
                                  section + "] (" + where + ")");
    }
    it->second(rc, value, where + ", " + section + "." + key);
  }
  return rc;
}

RunConfig parse_run_config_file(const std::string& path, const RunConfig& base) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("config: cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config_text(ss.str(), base);
}

void write_run_config(std::ostream& os, const RunConfig& rc) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "[data]\n"
     << "cube = " << rc.cube << "\n"
     << "labels = " << rc.labels << "\n"
     << "truth_endmembers = " << rc.truth_endmembers << "\n"
     << "truth_abundance = " << rc.truth_abundance << "\n"
     << "train_frac = " << g17(rc.train_frac) << "\n"
     << "val_frac = " << g17(rc.val_frac) << "\n"
     << "split_seed = " << rc.split_seed << "\n\n"
     << "[model]\n"
     << "dim = " << rc.dim << "\n"
     << "endmembers = " << rc.endmembers << "\n"
     << "variants = " << rc.variants << "\n"
     << "groups = " << rc.groups << "\n"
     << "state = " << rc.state << "\n"
     << "lambda = " << g17(rc.lambda) << "\n"
     << "alpha = " << g17(rc.alpha) << "\n"
     << "beta = " << g17(rc.beta) << "\n"
     << "tau = " << g17(rc.tau) << "\n"
     << "seed = " << rc.seed << "\n\n"
     << "[train]\n"
     << "epochs = " << rc.epochs << "\n"
     << "lr_cls = " << g17(rc.lr_cls) << "\n"
     << "lr_um = " << g17(rc.lr_um) << "\n"
     << "lr_decay = " << g17(rc.lr_decay) << "\n"
     << "lr_decay_every = " << rc.lr_decay_every << "\n"
     << "sad_weight = " << g17(rc.sad_weight) << "\n"
     << "sparsity_weight = " << g17(rc.sparsity_weight) << "\n"
     << "verbose = " << b(rc.verbose) << "\n\n"
     << "[ablation]\n"
     << "no_pos_um = " << b(rc.no_pos_um) << "\n"
     << "no_pos_cls = " << b(rc.no_pos_cls) << "\n"
     << "no_topk = " << b(rc.no_topk) << "\n"
     << "no_variability = " << b(rc.no_variability) << "\n"
     << "freeze_endmembers = " << b(rc.freeze_endmembers) << "\n\n"
     << "[output]\n"
     << "dir = " << rc.out_dir << "\n"
     << "force = " << b(rc.force) << "\n"
     << "envi_mirror = " << b(rc.envi_mirror) << "\n";
}

void write_run_config_file(const std::string& path, const RunConfig& rc) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("config: cannot write " + path);
  write_run_config(f, rc);
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.cube == b.cube && a.labels == b.labels &&
         a.truth_endmembers == b.truth_endmembers &&
         a.truth_abundance == b.truth_abundance && a.train_frac == b.train_frac &&
         a.val_frac == b.val_frac && a.split_seed == b.split_seed && a.dim == b.dim &&
         a.endmembers == b.endmembers && a.variants == b.variants && a.groups == b.groups &&
         a.state == b.state && a.lambda == b.lambda && a.alpha == b.alpha &&
         a.beta == b.beta && a.tau == b.tau && a.seed == b.seed && a.epochs == b.epochs &&
         a.lr_cls == b.lr_cls && a.lr_um == b.lr_um && a.lr_decay == b.lr_decay &&
         a.lr_decay_every == b.lr_decay_every && a.sad_weight == b.sad_weight &&
         a.sparsity_weight == b.sparsity_weight && a.verbose == b.verbose &&
         a.no_pos_um == b.no_pos_um && a.no_pos_cls == b.no_pos_cls &&
         a.no_topk == b.no_topk && a.no_variability == b.no_variability &&
         a.freeze_endmembers == b.freeze_endmembers && a.out_dir == b.out_dir &&
         a.force == b.force && a.envi_mirror == b.envi_mirror;
}

}  // namespace ssmix
