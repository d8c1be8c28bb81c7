#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tahcd/matrix.hpp"

namespace tahcd {

// Row-aligned multimodal data: modalities[m] is (N x d_m); labels has N
// entries in [0, num_classes).
struct MultimodalDataset {
  std::vector<Matrix> modalities;
  std::vector<int> labels;
  int num_classes = 0;

  int num_samples() const { return modalities.empty() ? 0 : modalities[0].rows; }
  int num_modalities() const { return int(modalities.size()); }

  // Throws ConfigError on row mismatches, label range violations, or
  // non-finite features.
  void validate() const;

  MultimodalDataset take(const std::vector<int>& indices) const;
};

struct SyntheticSpec {
  int n = 600;
  int num_classes = 4;
  std::vector<int> dims = {20, 30};  // feature width per modality
  int latent_factors = 8;            // shared class-conditioned factor dim
  double class_separation = 2.5;     // spread of class centers in factor space
  double factor_noise = 0.5;         // within-class factor jitter
  double nonlinearity = 0.3;         // weight of the tanh component in each view
  double jitter = 0.05;              // per-feature observation noise
  std::uint64_t seed = 1;
};

// Clean, z-scored (population std) multimodal data whose modalities share
// class-conditioned latent factors. Labels are balanced (n need not divide
// evenly; remainders spill onto the first classes) and row order is shuffled.
MultimodalDataset generate_synthetic(const SyntheticSpec& spec);

// Per-feature z-score statistics; std uses the population convention
// (divide by N) and degenerates to 1 for constant columns (warned).
struct FeatureStats {
  std::vector<Vec> mean;  // per modality
  std::vector<Vec> std;
};

FeatureStats fit_feature_stats(const MultimodalDataset& ds);
void apply_feature_stats(MultimodalDataset& ds, const FeatureStats& stats);

struct NoiseSpec {
  double epsilon = 0.0;               // additive Gaussian scale
  double eta = 0.0;                   // fraction of rows hit by cross-modality shuffling
  std::vector<int> target_modalities; // empty = default for the op (see below)
  std::uint64_t seed = 0;
};

// Adds epsilon * N(0, I) to each targeted modality (default: all).
void inject_modality_noise(MultimodalDataset& ds, const NoiseSpec& spec);

// Breaks cross-modality correspondence: picks floor(eta * N) rows and
// replaces their rows in each targeted modality (default: every modality
// except 0, the anchor that stays aligned with the labels) by a cyclic
// derangement of that subset, so no selected row keeps its own partner.
// Returns the selected row indices, sorted. If floor(eta * N) <= 1 a warning
// is printed and nothing changes.
std::vector<int> inject_cross_modality_noise(MultimodalDataset& ds, const NoiseSpec& spec);

struct SplitResult {
  MultimodalDataset train;
  MultimodalDataset test;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
};

// Stratified split: per class, round(fraction * count) rows go to train.
// Every class keeps at least one row on each side (throws if impossible).
SplitResult stratified_split(const MultimodalDataset& ds, double train_fraction,
                             std::uint64_t seed);

// One numeric CSV per modality (header row with column names, one row per
// sample) plus a single-column label CSV. Raw values, no normalization;
// errors cite the file, row and column.
MultimodalDataset load_csv(const std::vector<std::string>& modality_paths,
                           const std::string& label_path);

void save_csv(const MultimodalDataset& ds, const std::vector<std::string>& modality_paths,
              const std::string& label_path);

}  // namespace tahcd
