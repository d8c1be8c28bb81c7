#pragma once

#include <functional>
#include <vector>

#include "tahcd/model.hpp"
#include "tahcd/saca.hpp"

namespace tahcd {

struct TtceConfig {
  int iterations = 30;     // E
  double alpha = 0.4;      // prior-mean blend toward the old prior
  double beta = 0.4;       // prior-covariance blend toward the old prior
  double step_size = 1e-2; // eta for both global and instance updates
  bool validate_psd = true;  // check blended covariances stay PSD each iteration
};

struct TtceTraceRow {
  int iteration = 0;
  double l_re = 0.0;
  double nll_s = 0.0;
  double nll_c = 0.0;
  double accuracy = -1.0;  // -1 when labels were not provided
};

// Evolving test-time state. ns/nc are frozen at the initial expert pass; the
// kept features, the globally denoised features and the priors are what move.
struct TtceState {
  std::vector<Matrix> h;        // globally denoised features, enhanced in place
  std::vector<Matrix> hs, hc;   // expert kept features, enhanced in place
  std::vector<Matrix> ns, nc;   // expert noise components, fixed
  std::vector<Matrix> ws, wc;   // initial expert masks (diagnostics)
  std::vector<SymEigen> subspaces;  // per-modality basis (empty when ASSA off)
  std::vector<Vec> masks;           // spectral masks (empty when ASSA off)
  Priors priors;                // refreshed by the blending rule
  Priors trace_priors;          // frozen copy of the initial batch priors: the
                                // trace measures alignment against a fixed
                                // yardstick while the dynamics keep refreshing
  int iteration = 0;            // id of the last recorded trace row
  std::vector<TtceTraceRow> trace;  // rows 0..iteration (row 0 = pre-update)
};

// Mean reconstruction error per modality and sample:
// (1/M) sum_m ||decoder(h + ns + nc) - x||_F^2 / N.
double loss_reconstruction(const TahcdModel& model, const std::vector<Matrix>& h,
                           const std::vector<Matrix>& ns, const std::vector<Matrix>& nc,
                           const std::vector<Matrix>& x);

// One reconstruction-driven update of every h: h <- h - 2 eta J^T (recon - x)
// with the noise components held fixed. Throws NumericError on a non-finite
// update.
void enhance_global(const TahcdModel& model, TtceState& state, const std::vector<Matrix>& x,
                    double step_size);

// Blends the priors toward fresh statistics of h: mu' = alpha mu + (1-alpha)
// new_mu, Sigma' = beta Sigma + (1-beta) new_Sigma; discrepancy priors are
// recomposed from the blended moments.
Priors update_priors(const Priors& priors, const std::vector<Matrix>& h, double alpha,
                     double beta, bool validate_psd);

// One prior-guided update of the kept features (closed-form NLL gradients).
// The cross-modality update reads every other modality's previous iterate
// (simultaneous update).
void enhance_instance(TtceState& state, double step_size);

// Optional accuracy probe for the trace (invoked per recorded row).
using TtceAccuracyProbe = std::function<double(const TtceState&)>;

// Initial feed-forward pass: encode, build subspaces, filter, estimate
// priors from the data at hand, run the experts once. Requires use_saca.
TtceState init_ttce_state(const TahcdModel& model, const std::vector<Matrix>& x,
                          bool record_masks = true);

// Runs `iterations` enhancement steps on an initialized state, appending one
// trace row per step (plus row 0 if the trace is empty). The training loop
// disables the trace — it only needs the enhanced features.
void ttce_iterate(const TahcdModel& model, TtceState& state, const std::vector<Matrix>& x,
                  const TtceConfig& cfg, int iterations,
                  const TtceAccuracyProbe* probe = nullptr, bool record_trace = true);

// The full label-free test-time procedure; with iterations = 0 this is
// exactly the feed-forward pipeline.
TtceState run_ttce(const TahcdModel& model, const std::vector<Matrix>& x, const TtceConfig& cfg,
                   const TtceAccuracyProbe* probe = nullptr);

}  // namespace tahcd
