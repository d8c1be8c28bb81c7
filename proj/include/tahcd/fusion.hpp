#pragma once

#include <span>
#include <vector>

#include "tahcd/model.hpp"
#include "tahcd/saca.hpp"
#include "tahcd/ttce.hpp"

namespace tahcd {

// Confidence-weighted fusion of the 2M expert streams (per-sample convex
// combination). Stream order: all modality-specific streams, then all
// cross-modality streams. Weights are the per-dimension geometric-mean
// likelihoods under the modality priors, softmax-normalized across streams.
struct FusionResult {
  Matrix fused;    // N x d
  Matrix weights;  // N x 2M, rows sum to 1
};

FusionResult confidence_fuse(const std::vector<Matrix>& hs, const std::vector<Matrix>& hc,
                             const Priors& priors);

struct PredictionBatch {
  Matrix logits;  // N x C
  Matrix probs;   // row-softmax of logits
  std::vector<int> classes;
};

PredictionBatch classify(const Mlp& classifier, const Matrix& features);

// Mean cross-entropy over the batch; optional dlogits receives the gradient
// (softmax minus one-hot, divided by N).
double loss_cross_entropy(const Matrix& logits, std::span<const int> labels,
                          Matrix* dlogits = nullptr);

// L_tot = L_assa + L_saca + L_re + L_cls (ablated terms enter as 0).
double loss_total(double l_assa, double l_saca, double l_re, double l_cls);

// Full inference: encode/filter, expert pass, test-time enhancement (when
// the model has experts), fusion, classification. With cfg.iterations = 0
// this is the plain feed-forward path. Labels, when given, only feed the
// per-iteration accuracy trace.
struct PipelineResult {
  PredictionBatch pred;
  Matrix fused;
  Matrix fusion_weights;  // empty when the model runs without experts
  TtceState state;        // empty when the model runs without experts
};

PipelineResult run_pipeline(const TahcdModel& model, const std::vector<Matrix>& x,
                            const TtceConfig& cfg, std::span<const int> labels = {});

}  // namespace tahcd
