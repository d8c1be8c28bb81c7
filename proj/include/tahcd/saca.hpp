#pragma once

#include <span>
#include <vector>

#include "tahcd/linalg.hpp"
#include "tahcd/matrix.hpp"
#include "tahcd/nn.hpp"

namespace tahcd {

// Gaussian priors over the globally denoised features: one per modality,
// plus one discrepancy prior per unordered modality pair (m < m') with
// mean mu_m - mu_m' and covariance Sigma_m + Sigma_m'.
struct Priors {
  std::vector<GaussianPrior> modality;
  std::vector<GaussianPrior> cross;  // flattened upper triangle, see pair_index
  double ridge_scale = kDefaultRidgeScale;
  double ridge_floor = 0.0;

  int num_modalities() const { return int(modality.size()); }
  bool empty() const { return modality.empty(); }

  int pair_index(int m, int mp) const;  // requires m < mp
  const GaussianPrior& pair(int m, int mp) const { return cross[std::size_t(pair_index(m, mp))]; }

  static Priors estimate(const std::vector<Matrix>& h, double ridge_scale = kDefaultRidgeScale,
                         double ridge_floor = 0.0);

  // Rebuilds from explicit per-modality moments (used by the test-time
  // blending rule); cross priors are always recomposed from these.
  static Priors from_moments(std::vector<Vec> means, std::vector<Matrix> covs,
                             double ridge_scale, double ridge_floor = 0.0);
};

// Exact additive split: mask = sigmoid net output, kept = h .* mask,
// removed = h - kept (so kept + removed == h to machine precision).
struct ExpertSplit {
  Matrix mask;
  Matrix kept;
  Matrix removed;
};

ExpertSplit expert_split(const Mlp& expert, const Matrix& h, Tape* tape = nullptr);

struct SacaLoss {
  double nll_s = 0.0;  // -sum_m mean_i log p^m(kept_s)
  double nll_c = 0.0;  // -sum_{m<m'} mean_i log p^{m-m'}(kept_c^m - kept_c^m')
  double total() const { return nll_s + nll_c; }
  // gradients w.r.t. the kept features, mean-over-samples convention
  std::vector<Matrix> d_hs, d_hc;
};

SacaLoss loss_saca(const std::vector<Matrix>& hs, const std::vector<Matrix>& hc,
                   const Priors& priors, bool want_grads = false);

// Per-sample negative-confidence weights (N x M, rows sum to 1): softmax
// over modalities of 1 - tanh(c), where c is the per-dimension geometric
// mean of the likelihood, exp(log p^m(h_i) / d). Low-confidence modalities
// get the larger weights.
Matrix neg_confidence(const std::vector<Matrix>& h, const Priors& priors);

// Strict-alignment substitute for the slack NLL (ablation): sum over pairs
// of mean_i (1 - cos(kept_c^m_i, kept_c^m'_i)). Optional gradients follow
// the same convention as loss_saca.
double loss_strict_alignment(const std::vector<Matrix>& hc, std::vector<Matrix>* d_hc = nullptr);

}  // namespace tahcd
