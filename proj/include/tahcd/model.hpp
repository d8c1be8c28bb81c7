#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tahcd/nn.hpp"

namespace tahcd {

struct ModelConfig {
  std::vector<int> modality_dims;  // input feature width per modality
  int num_classes = 0;
  int latent_dim = 32;   // shared latent width d
  int hidden_dim = 64;   // hidden width of every sub-network
  double ridge_scale = 1e-4;
  // Absolute lower bound on the prior ridge. Prior covariances are
  // near-singular whenever the latent width exceeds a modality's intrinsic
  // dimension, and the enhancement step contracts distance-to-mean by
  // (1 - eta/(lambda + ridge)) per eigendirection — it diverges unless
  // ridge > eta/2. A relative ridge cannot guarantee that: it tracks the
  // feature scale, which shrinks exactly when training squeezes the noise
  // directions. Default = 10x the default enhancement step, which keeps the
  // test-time updates smoothly contractive on every direction.
  double ridge_floor = 0.1;
  bool use_assa = true;  // spectral mask denoising on/off (ablations)
  bool use_saca = true;  // per-sample experts on/off; implies no TTCE when off

  int num_modalities() const { return int(modality_dims.size()); }
  void validate() const;
};

// The complete set of learnable networks. Statistics (subspaces, priors) are
// deliberately not stored here: training refreshes them per epoch and the
// test-time loop re-estimates them on the data it sees.
struct TahcdModel {
  ModelConfig cfg;
  std::vector<Mlp> encoders;    // d_m -> d, linear output
  std::vector<Mlp> mask_nets;   // d -> d, sigmoid; input is the eigenvalue vector
  std::vector<Mlp> experts_s;   // d -> d, sigmoid; modality-specific noise mask
  std::vector<Mlp> experts_c;   // d -> d, sigmoid; cross-modality noise mask
  std::vector<Mlp> decoders;    // d -> d_m, linear output
  Mlp classifier;               // d -> C, linear (logits)

  int num_modalities() const { return cfg.num_modalities(); }
};

TahcdModel make_model(const ModelConfig& cfg, Rng& rng);

void save_model(const TahcdModel& model, const std::string& path);
TahcdModel load_model(const std::string& path);

}  // namespace tahcd
