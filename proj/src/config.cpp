#include "tahcd/config.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "tahcd/errors.hpp"
#include "tahcd/rng.hpp"

namespace tahcd {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Raw key = value storage with consumption tracking, so leftovers (typos)
// can be reported after the known keys are pulled out.
struct RawConfig {
  std::map<std::string, std::string> values;  // "section.key" -> value
  std::map<std::string, bool> used;

  const std::string* find(const std::string& full) {
    auto it = values.find(full);
    if (it == values.end()) return nullptr;
    used[full] = true;
    return &it->second;
  }
};

RawConfig read_raw(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty() || section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section or empty");
    std::string full = section + "." + key;
    if (raw.values.count(full))
      throw ConfigError("config: duplicate key '" + full + "'");
    raw.values[full] = trim(line.substr(eq + 1));
    raw.used[full] = false;
  }
  return raw;
}

int parse_int(const std::string& full, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config '" + full + "': '" + v + "' is not an integer");
  return out;
}

double parse_double(const std::string& full, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config '" + full + "': '" + v + "' is not a number");
  return out;
}

bool parse_bool(const std::string& full, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config '" + full + "': '" + v + "' is not a boolean");
}

std::vector<std::string> split_ws(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

template <typename T, typename F>
void pull(RawConfig& raw, const std::string& full, T& slot, F&& convert) {
  if (const std::string* v = raw.find(full)) slot = convert(full, *v);
}

void pull_int(RawConfig& raw, const std::string& full, int& slot) {
  pull(raw, full, slot, parse_int);
}
void pull_double(RawConfig& raw, const std::string& full, double& slot) {
  pull(raw, full, slot, parse_double);
}
void pull_bool(RawConfig& raw, const std::string& full, bool& slot) {
  pull(raw, full, slot, parse_bool);
}
void pull_string(RawConfig& raw, const std::string& full, std::string& slot) {
  if (const std::string* v = raw.find(full)) slot = *v;
}

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

void ExperimentConfig::validate_and_normalize() {
  if (source != "synthetic" && source != "csv")
    throw ConfigError("config 'data.source': must be 'synthetic' or 'csv'");
  if (source == "csv") {
    if (modality_csv.empty()) throw ConfigError("config 'data.modality_csv': required for csv source");
    if (label_csv.empty()) throw ConfigError("config 'data.label_csv': required for csv source");
  } else {
    if (samples < 4) throw ConfigError("config 'data.samples': need at least 4");
    if (classes < 2) throw ConfigError("config 'data.classes': need at least 2");
    if (dims.empty()) throw ConfigError("config 'data.dims': need at least one modality");
    for (int d : dims)
      if (d < 1) throw ConfigError("config 'data.dims': widths must be positive");
    if (latent_factors < 1) throw ConfigError("config 'data.latent_factors': must be positive");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("config 'data.train_fraction': must lie strictly between 0 and 1");
  for (auto [key, v] : {std::pair{"noise.train.epsilon", train_epsilon},
                        {"noise.train.eta", train_eta},
                        {"noise.test.epsilon", test_epsilon},
                        {"noise.test.eta", test_eta}})
    if (v < 0.0) throw ConfigError(std::string("config '") + key + "': must be non-negative");
  if (train_eta > 1.0 || test_eta > 1.0)
    throw ConfigError("config 'noise.*.eta': a fraction of rows, at most 1");
  for (const std::vector<int>* ts : {&train_epsilon_targets, &test_epsilon_targets})
    for (int t : *ts)
      if (t < 0) throw ConfigError("config 'noise.*.epsilon_targets': indices are 0-based");
  if (latent_dim < 1) throw ConfigError("config 'model.latent_dim': must be positive");
  if (hidden_dim < 1) throw ConfigError("config 'model.hidden_dim': must be positive");
  if (ridge_scale < 0.0) throw ConfigError("config 'model.ridge_scale': must be non-negative");
  if (ridge_floor < 0.0) throw ConfigError("config 'model.ridge_floor': must be non-negative");
  if (epochs < 1) throw ConfigError("config 'train.epochs': must be positive");
  if (batch_size < 2) throw ConfigError("config 'train.batch_size': need at least 2");
  if (learning_rate <= 0.0) throw ConfigError("config 'train.learning_rate': must be positive");
  if (weight_decay < 0.0) throw ConfigError("config 'train.weight_decay': must be non-negative");
  if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0)
    throw ConfigError("config 'train.lr_decay_factor': must lie in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("config 'train.lr_decay_every': must be positive");
  if (ttce_iterations < 0 || ttce_train_iterations < 0)
    throw ConfigError("config 'ttce.iterations': must be non-negative");
  if (ttce_alpha < 0.0 || ttce_alpha > 1.0 || ttce_beta < 0.0 || ttce_beta > 1.0)
    throw ConfigError("config 'ttce.alpha'/'ttce.beta': blend weights lie in [0, 1]");
  if (ttce_step_size <= 0.0) throw ConfigError("config 'ttce.step_size': must be positive");
  if (seeds.empty()) throw ConfigError("config 'experiment.seeds': need at least one seed");
  if (output_dir.empty()) throw ConfigError("config 'experiment.output_dir': must not be empty");

  if (!use_saca && use_ttce) {
    std::cerr << "config: ablation.saca = false forces ablation.ttce = false\n";
    use_ttce = false;
  }
  if (!use_saca) confidence_guidance = false;
}

SyntheticSpec ExperimentConfig::synthetic_spec(std::uint64_t seed) const {
  SyntheticSpec s;
  s.n = samples;
  s.num_classes = classes;
  s.dims = dims;
  s.latent_factors = latent_factors;
  s.class_separation = class_separation;
  s.factor_noise = factor_noise;
  s.nonlinearity = nonlinearity;
  s.jitter = jitter;
  s.seed = substream_seed(seed, "data");
  return s;
}

ModelConfig ExperimentConfig::model_config(const MultimodalDataset& data) const {
  ModelConfig m;
  for (const Matrix& mod : data.modalities) m.modality_dims.push_back(mod.cols);
  m.num_classes = data.num_classes;
  m.latent_dim = latent_dim;
  m.hidden_dim = hidden_dim;
  m.ridge_scale = ridge_scale;
  m.ridge_floor = ridge_floor;
  m.use_assa = use_assa;
  m.use_saca = use_saca;
  return m;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.adam.lr = learning_rate;
  t.adam.weight_decay = weight_decay;
  t.adam.decay_factor = lr_decay_factor;
  t.adam.decay_every = lr_decay_every;
  t.ttce = ttce_config();
  t.ttce_train_iterations = ttce_train_iterations;
  t.use_ttce = use_ttce;
  t.fuse_enhanced = use_ttce;
  t.confidence_guidance = confidence_guidance;
  t.strict_alignment = strict_alignment;
  t.seed = substream_seed(seed, "train");
  return t;
}

TtceConfig ExperimentConfig::ttce_config() const {
  TtceConfig c;
  c.iterations = use_ttce ? ttce_iterations : 0;
  c.alpha = ttce_alpha;
  c.beta = ttce_beta;
  c.step_size = ttce_step_size;
  return c;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  RawConfig raw = read_raw(text);
  ExperimentConfig c;

  pull_string(raw, "data.source", c.source);
  pull_int(raw, "data.samples", c.samples);
  pull_int(raw, "data.classes", c.classes);
  if (const std::string* v = raw.find("data.dims")) {
    c.dims.clear();
    for (const std::string& tok : split_ws(*v)) c.dims.push_back(parse_int("data.dims", tok));
  }
  pull_int(raw, "data.latent_factors", c.latent_factors);
  pull_double(raw, "data.class_separation", c.class_separation);
  pull_double(raw, "data.factor_noise", c.factor_noise);
  pull_double(raw, "data.nonlinearity", c.nonlinearity);
  pull_double(raw, "data.jitter", c.jitter);
  pull_double(raw, "data.train_fraction", c.train_fraction);
  if (const std::string* v = raw.find("data.modality_csv")) c.modality_csv = split_ws(*v);
  pull_string(raw, "data.label_csv", c.label_csv);

  auto pull_targets = [&raw](const std::string& full, std::vector<int>& slot) {
    if (const std::string* v = raw.find(full)) {
      slot.clear();
      for (const std::string& tok : split_ws(*v)) slot.push_back(parse_int(full, tok));
    }
  };
  pull_double(raw, "noise.train.epsilon", c.train_epsilon);
  pull_double(raw, "noise.train.eta", c.train_eta);
  pull_targets("noise.train.epsilon_targets", c.train_epsilon_targets);
  pull_double(raw, "noise.test.epsilon", c.test_epsilon);
  pull_double(raw, "noise.test.eta", c.test_eta);
  pull_targets("noise.test.epsilon_targets", c.test_epsilon_targets);

  pull_int(raw, "model.latent_dim", c.latent_dim);
  pull_int(raw, "model.hidden_dim", c.hidden_dim);
  pull_double(raw, "model.ridge_scale", c.ridge_scale);
  pull_double(raw, "model.ridge_floor", c.ridge_floor);

  pull_int(raw, "train.epochs", c.epochs);
  pull_int(raw, "train.batch_size", c.batch_size);
  pull_double(raw, "train.learning_rate", c.learning_rate);
  pull_double(raw, "train.weight_decay", c.weight_decay);
  pull_double(raw, "train.lr_decay_factor", c.lr_decay_factor);
  pull_int(raw, "train.lr_decay_every", c.lr_decay_every);

  pull_int(raw, "ttce.iterations", c.ttce_iterations);
  pull_int(raw, "ttce.train_iterations", c.ttce_train_iterations);
  pull_double(raw, "ttce.alpha", c.ttce_alpha);
  pull_double(raw, "ttce.beta", c.ttce_beta);
  pull_double(raw, "ttce.step_size", c.ttce_step_size);

  pull_bool(raw, "ablation.assa", c.use_assa);
  pull_bool(raw, "ablation.saca", c.use_saca);
  pull_bool(raw, "ablation.ttce", c.use_ttce);
  pull_bool(raw, "ablation.confidence_guidance", c.confidence_guidance);
  pull_bool(raw, "ablation.strict_alignment", c.strict_alignment);

  if (const std::string* v = raw.find("experiment.seeds")) {
    c.seeds.clear();
    for (const std::string& tok : split_ws(*v)) {
      std::uint64_t s = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), s);
      if (ec != std::errc() || p != tok.data() + tok.size())
        throw ConfigError("config 'experiment.seeds': '" + tok + "' is not a seed");
      c.seeds.push_back(s);
    }
  }
  pull_string(raw, "experiment.output_dir", c.output_dir);

  for (const auto& [full, used] : raw.used)
    if (!used) throw ConfigError("config: unknown key '" + full + "'");

  c.validate_and_normalize();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::string serialize_experiment_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[data]\n";
  out << "source = " << c.source << "\n";
  if (!c.modality_csv.empty()) {
    out << "modality_csv =";
    for (const std::string& p : c.modality_csv) out << " " << p;
    out << "\n";
  }
  if (!c.label_csv.empty()) out << "label_csv = " << c.label_csv << "\n";
  out << "samples = " << c.samples << "\n";
  out << "classes = " << c.classes << "\n";
  out << "dims =";
  for (int d : c.dims) out << " " << d;
  out << "\n";
  out << "latent_factors = " << c.latent_factors << "\n";
  out << "class_separation = " << fmt(c.class_separation) << "\n";
  out << "factor_noise = " << fmt(c.factor_noise) << "\n";
  out << "nonlinearity = " << fmt(c.nonlinearity) << "\n";
  out << "jitter = " << fmt(c.jitter) << "\n";
  out << "train_fraction = " << fmt(c.train_fraction) << "\n";
  auto targets_line = [&out](const char* key, const std::vector<int>& ts) {
    if (ts.empty()) return;
    out << key << " =";
    for (int t : ts) out << " " << t;
    out << "\n";
  };
  out << "\n[noise.train]\n";
  out << "epsilon = " << fmt(c.train_epsilon) << "\n";
  out << "eta = " << fmt(c.train_eta) << "\n";
  targets_line("epsilon_targets", c.train_epsilon_targets);
  out << "\n[noise.test]\n";
  out << "epsilon = " << fmt(c.test_epsilon) << "\n";
  out << "eta = " << fmt(c.test_eta) << "\n";
  targets_line("epsilon_targets", c.test_epsilon_targets);
  out << "\n[model]\n";
  out << "latent_dim = " << c.latent_dim << "\n";
  out << "hidden_dim = " << c.hidden_dim << "\n";
  out << "ridge_scale = " << fmt(c.ridge_scale) << "\n";
  out << "ridge_floor = " << fmt(c.ridge_floor) << "\n";
  out << "\n[train]\n";
  out << "epochs = " << c.epochs << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "learning_rate = " << fmt(c.learning_rate) << "\n";
  out << "weight_decay = " << fmt(c.weight_decay) << "\n";
  out << "lr_decay_factor = " << fmt(c.lr_decay_factor) << "\n";
  out << "lr_decay_every = " << c.lr_decay_every << "\n";
  out << "\n[ttce]\n";
  out << "iterations = " << c.ttce_iterations << "\n";
  out << "train_iterations = " << c.ttce_train_iterations << "\n";
  out << "alpha = " << fmt(c.ttce_alpha) << "\n";
  out << "beta = " << fmt(c.ttce_beta) << "\n";
  out << "step_size = " << fmt(c.ttce_step_size) << "\n";
  out << "\n[ablation]\n";
  out << "assa = " << (c.use_assa ? "true" : "false") << "\n";
  out << "saca = " << (c.use_saca ? "true" : "false") << "\n";
  out << "ttce = " << (c.use_ttce ? "true" : "false") << "\n";
  out << "confidence_guidance = " << (c.confidence_guidance ? "true" : "false") << "\n";
  out << "strict_alignment = " << (c.strict_alignment ? "true" : "false") << "\n";
  out << "\n[experiment]\n";
  out << "seeds =";
  for (std::uint64_t s : c.seeds) out << " " << s;
  out << "\n";
  out << "output_dir = " << c.output_dir << "\n";
  return out.str();
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << serialize_experiment_config(cfg);
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

}  // namespace tahcd
