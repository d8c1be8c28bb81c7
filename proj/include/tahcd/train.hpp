#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tahcd/data.hpp"
#include "tahcd/fusion.hpp"
#include "tahcd/model.hpp"

namespace tahcd {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  AdamConfig adam;
  TtceConfig ttce;                 // step size / alpha / beta for in-training enhancement
  int ttce_train_iterations = 5;   // E during training (test-time E lives in TtceConfig)
  bool use_ttce = true;            // enhancement during training and at test
  bool fuse_enhanced = true;       // prediction from post-enhancement features
  bool confidence_guidance = true; // Eq-13-style per-sample gradient weighting
  bool strict_alignment = false;   // replace the slack NLL by cosine alignment (ablation)
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct HistoryRow {
  int epoch = 0;
  double l_assa = 0, l_o = 0, l_a = 0;
  double l_saca = 0, nll_s = 0, nll_c = 0;
  double l_re = 0, l_cls = 0;
  double train_acc = 0;
};

struct LossBreakdown {
  double l_o = 0, l_a = 0, l_assa = 0;
  double nll_s = 0, nll_c = 0, l_saca = 0;
  double l_re = 0, l_cls = 0, l_tot = 0;
  int correct = 0;
};

// Everything held constant while differentiating one batch: the epoch-level
// eigenbases and priors, the expert inputs (gradients stop at the denoised
// features on the expert path), the noise components inside the
// reconstruction term, the enhancement displacements, and the fusion /
// confidence weights. batch_loss is then an ordinary function of the network
// parameters, and batch_gradients is its exact gradient — which is what the
// finite-difference suites check.
struct FrozenBatch {
  std::vector<Matrix> x;
  std::vector<int> labels;
  std::vector<Matrix> bases;       // eigenbasis per modality (empty when the mask path is off)
  std::vector<Vec> mask_inputs;    // eigenvalue vectors feeding the mask nets
  Priors priors;
  std::vector<Matrix> h_expert_in; // frozen expert inputs
  std::vector<Matrix> ns_bar, nc_bar;   // frozen noise parts for reconstruction
  std::vector<Matrix> delta_s, delta_c; // enhancement displacements added to the streams
  Matrix fusion_weights;           // N x 2M
  Matrix neg_conf;                 // N x M
};

struct EpochContext {
  std::vector<SymEigen> subspaces;  // from the full training set, frozen per epoch
  Priors priors;
};

// Recomputes the epoch-level statistics with the current parameters.
EpochContext make_epoch_context(const TahcdModel& model, const std::vector<Matrix>& x_full);

FrozenBatch freeze_batch(const TahcdModel& model, std::vector<Matrix> x, std::vector<int> labels,
                         const EpochContext& ctx, const TrainConfig& cfg);

LossBreakdown batch_loss(const TahcdModel& model, const FrozenBatch& fb, const TrainConfig& cfg);

// How the cross-modality experts' NLL gradient is weighted per sample.
enum class GuidanceMode {
  Exact,       // plain gradient of the total loss (finite-difference reference)
  Confidence,  // neg-confidence weights
  Uniform,     // constant 1/M (guidance ablation)
};

struct ModelGrads {
  std::vector<Gradients> encoders, mask_nets, experts_s, experts_c, decoders;
  Gradients classifier;
};

ModelGrads batch_gradients(const TahcdModel& model, const FrozenBatch& fb, const TrainConfig& cfg,
                           GuidanceMode mode, LossBreakdown* breakdown = nullptr);

struct TrainResult {
  std::vector<HistoryRow> history;
};

// Full training loop. On numerical failure the model is restored to the end
// of the last completed epoch and a NumericError is thrown.
TrainResult train(TahcdModel& model, const MultimodalDataset& data, const TrainConfig& cfg);

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

}  // namespace tahcd
