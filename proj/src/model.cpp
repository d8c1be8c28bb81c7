#include "tahcd/model.hpp"

#include <sstream>

#include "tahcd/errors.hpp"

namespace tahcd {

void ModelConfig::validate() const {
  if (modality_dims.empty()) throw ConfigError("model needs at least one modality");
  for (int d : modality_dims)
    if (d <= 0) throw ConfigError("modality feature widths must be positive");
  if (num_classes < 2) throw ConfigError("model needs at least two classes");
  if (latent_dim <= 0 || hidden_dim <= 0)
    throw ConfigError("latent_dim and hidden_dim must be positive");
  if (ridge_scale < 0.0) throw ConfigError("ridge_scale must be non-negative");
  if (ridge_floor < 0.0) throw ConfigError("ridge_floor must be non-negative");
}

TahcdModel make_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  TahcdModel model;
  model.cfg = cfg;
  int d = cfg.latent_dim, hid = cfg.hidden_dim;
  for (int dm : cfg.modality_dims) {
    // encoders and decoders are single linear maps: additive input noise
    // stays Gaussian in the latent, which is the regime the priors, the
    // spectral masks and the test-time updates are built for; a hidden
    // layer here buys a little clean accuracy and loses graceful
    // degradation under noise the model never saw. The per-sample experts
    // and the mask net carry the nonlinearity.
    model.encoders.push_back(make_mlp({dm, d}, Activation::Linear, rng));
    model.mask_nets.push_back(make_mlp({d, hid, d}, Activation::Sigmoid, rng));
    model.experts_s.push_back(make_mlp({d, hid, d}, Activation::Sigmoid, rng));
    model.experts_c.push_back(make_mlp({d, hid, d}, Activation::Sigmoid, rng));
    model.decoders.push_back(make_mlp({d, dm}, Activation::Linear, rng));
    // open the gates at init: a zero-bias sigmoid starts at 0.5 and the
    // alignment loss can slam it shut before the classifier has any say;
    // starting near 1 keeps features flowing (same trick as LSTM forget
    // gates). Experts start at 0.88 too so the initial split is mild.
    for (Mlp* gate : {&model.mask_nets.back(), &model.experts_s.back(), &model.experts_c.back()})
      for (double& b : gate->layers.back().bias) b = 2.0;
  }
  model.classifier = make_mlp({d, cfg.num_classes}, Activation::Linear, rng);
  return model;
}

void save_model(const TahcdModel& model, const std::string& path) {
  std::vector<std::pair<std::string, const Mlp*>> nets;
  for (int m = 0; m < model.num_modalities(); ++m) {
    std::string id = std::to_string(m);
    nets.emplace_back("encoder" + id, &model.encoders[std::size_t(m)]);
    nets.emplace_back("mask" + id, &model.mask_nets[std::size_t(m)]);
    nets.emplace_back("expert_s" + id, &model.experts_s[std::size_t(m)]);
    nets.emplace_back("expert_c" + id, &model.experts_c[std::size_t(m)]);
    nets.emplace_back("decoder" + id, &model.decoders[std::size_t(m)]);
  }
  nets.emplace_back("classifier", &model.classifier);

  std::ostringstream note;
  note << "classes=" << model.cfg.num_classes << " assa=" << int(model.cfg.use_assa)
       << " saca=" << int(model.cfg.use_saca) << " ridge_scale=" << model.cfg.ridge_scale
       << " ridge_floor=" << model.cfg.ridge_floor;
  save_networks(path, nets, note.str());
}

TahcdModel load_model(const std::string& path) {
  LoadedNetworks loaded = load_networks(path);
  TahcdModel model;

  std::istringstream note(loaded.note);
  std::string tok;
  int classes = 0, assa = 1, saca = 1;
  double ridge_scale = 1e-4, ridge_floor = 0.1;
  while (note >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) continue;
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "classes") classes = std::stoi(val);
    else if (key == "assa") assa = std::stoi(val);
    else if (key == "saca") saca = std::stoi(val);
    else if (key == "ridge_scale") ridge_scale = std::stod(val);
    else if (key == "ridge_floor") ridge_floor = std::stod(val);
  }
  if (classes < 2) throw ConfigError("checkpoint '" + path + "' lacks a usable class count");

  for (std::size_t i = 0; i + 1 < loaded.nets.size(); i += 5) {
    std::string id = std::to_string(i / 5);
    model.encoders.push_back(loaded.get("encoder" + id));
    model.mask_nets.push_back(loaded.get("mask" + id));
    model.experts_s.push_back(loaded.get("expert_s" + id));
    model.experts_c.push_back(loaded.get("expert_c" + id));
    model.decoders.push_back(loaded.get("decoder" + id));
  }
  model.classifier = loaded.get("classifier");

  if (model.encoders.empty()) throw ConfigError("checkpoint '" + path + "' holds no modalities");
  for (const Mlp& enc : model.encoders) model.cfg.modality_dims.push_back(enc.in_dim());
  model.cfg.num_classes = classes;
  model.cfg.latent_dim = model.encoders[0].out_dim();
  model.cfg.hidden_dim = model.encoders[0].layers.size() > 1
                             ? model.encoders[0].layers[0].weight.rows
                             : model.cfg.latent_dim;
  model.cfg.use_assa = assa != 0;
  model.cfg.use_saca = saca != 0;
  model.cfg.ridge_scale = ridge_scale;
  model.cfg.ridge_floor = ridge_floor;
  model.cfg.validate();
  return model;
}

}  // namespace tahcd
