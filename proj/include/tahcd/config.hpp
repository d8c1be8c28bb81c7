#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tahcd/data.hpp"
#include "tahcd/model.hpp"
#include "tahcd/train.hpp"

namespace tahcd {

// One experiment = data recipe + noise settings + model/optimizer knobs +
// ablation switches + seed list. Stored as a sectioned key = value text file
// (see docs/config.md for the full key reference). parse and serialize are
// exact inverses on valid configs.
struct ExperimentConfig {
  // [data]
  std::string source = "synthetic";  // "synthetic" or "csv"
  int samples = 600;
  int classes = 4;
  std::vector<int> dims = {20, 30};
  int latent_factors = 8;
  double class_separation = 2.5;
  double factor_noise = 0.5;
  double nonlinearity = 0.3;
  double jitter = 0.05;
  double train_fraction = 0.7;
  std::vector<std::string> modality_csv;  // csv mode: one file per modality
  std::string label_csv;

  // [noise.train] / [noise.test] — applied after the split, so corruption
  // never leaks across it. epsilon_targets restricts the Gaussian corruption
  // to the listed modalities (0-based; empty = all), matching the usual
  // robustness protocol of corrupting half the modalities while the rest
  // stay clean. The row shuffle keeps its own default (every modality but
  // the first, which anchors the labels).
  double train_epsilon = 0.0;
  double train_eta = 0.0;
  std::vector<int> train_epsilon_targets;
  double test_epsilon = 0.0;
  double test_eta = 0.0;
  std::vector<int> test_epsilon_targets;

  // [model]
  int latent_dim = 32;
  int hidden_dim = 64;
  double ridge_scale = 1e-4;
  // covariance eigenvalue floor for the priors. It has to sit above the
  // enhancement step size or the instance updates oscillate on near-zero
  // variance directions, but not so high that it swamps the true spectrum:
  // too low and the stream NLL gradients from those directions also drive
  // the expert gates shut during training.
  double ridge_floor = 0.1;

  // [train]
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double lr_decay_factor = 0.2;
  int lr_decay_every = 100;

  // [ttce]
  int ttce_iterations = 30;       // E at test time
  int ttce_train_iterations = 5;  // E during training
  double ttce_alpha = 0.4;
  double ttce_beta = 0.4;
  double ttce_step_size = 1e-2;

  // [ablation]
  bool use_assa = true;
  bool use_saca = true;
  bool use_ttce = true;
  bool confidence_guidance = true;
  bool strict_alignment = false;

  // [experiment]
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  // Throws ConfigError naming the offending section.key. Also enforces flag
  // consistency: experts off forces the enhancement loop off (the loop moves
  // expert outputs, so there is nothing to enhance without them).
  void validate_and_normalize();

  // Domain-struct views. Per-seed randomness is derived from the given seed
  // via named substreams so ablations differ only where intended.
  SyntheticSpec synthetic_spec(std::uint64_t seed) const;
  ModelConfig model_config(const MultimodalDataset& data) const;
  TrainConfig train_config(std::uint64_t seed) const;
  TtceConfig ttce_config() const;
};

// Parse from text / file. Unknown sections or keys are errors (they are
// invariably typos). The result is validated and normalized.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

std::string serialize_experiment_config(const ExperimentConfig& cfg);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace tahcd
