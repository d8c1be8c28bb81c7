#include "tahcd/ttce.hpp"

#include <cmath>
#include <string>

#include "tahcd/assa.hpp"
#include "tahcd/errors.hpp"

namespace tahcd {

static void check_modalities(const TahcdModel& model, const std::vector<Matrix>& x) {
  if (int(x.size()) != model.num_modalities())
    throw NumericError("expected " + std::to_string(model.num_modalities()) +
                       " modalities, got " + std::to_string(x.size()));
  for (int m = 0; m < model.num_modalities(); ++m)
    if (x[std::size_t(m)].cols != model.cfg.modality_dims[std::size_t(m)])
      throw NumericError("modality " + std::to_string(m) + " width mismatch");
}

double loss_reconstruction(const TahcdModel& model, const std::vector<Matrix>& h,
                           const std::vector<Matrix>& ns, const std::vector<Matrix>& nc,
                           const std::vector<Matrix>& x) {
  check_modalities(model, x);
  int mm = model.num_modalities();
  double total = 0.0;
  for (int m = 0; m < mm; ++m) {
    Matrix input = add(add(h[std::size_t(m)], ns[std::size_t(m)]), nc[std::size_t(m)]);
    Matrix recon = forward(model.decoders[std::size_t(m)], input);
    sub_inplace(recon, x[std::size_t(m)]);
    total += frobenius_sq(recon) / input.rows;
  }
  return total / mm;
}

void enhance_global(const TahcdModel& model, TtceState& state, const std::vector<Matrix>& x,
                    double step_size) {
  int mm = model.num_modalities();
  for (int m = 0; m < mm; ++m) {
    Matrix input = add(add(state.h[std::size_t(m)], state.ns[std::size_t(m)]), state.nc[std::size_t(m)]);
    Tape tape;
    Matrix residual = forward(model.decoders[std::size_t(m)], input, &tape);
    sub_inplace(residual, x[std::size_t(m)]);
    // gradient of sum ||recon - x||^2 w.r.t. the input is 2 J^T residual
    Gradients g = backward(model.decoders[std::size_t(m)], tape, residual);
    axpy_inplace(state.h[std::size_t(m)], -2.0 * step_size, g.dinput);
    if (!all_finite(state.h[std::size_t(m)]))
      throw NumericError("test-time global update diverged at iteration " +
                         std::to_string(state.iteration + 1) + ", modality " + std::to_string(m));
  }
}

Priors update_priors(const Priors& priors, const std::vector<Matrix>& h, double alpha,
                     double beta, bool validate_psd) {
  int mm = priors.num_modalities();
  if (int(h.size()) != mm) throw NumericError("update_priors: feature/prior count mismatch");
  std::vector<Vec> means;
  std::vector<Matrix> covs;
  for (int m = 0; m < mm; ++m) {
    auto [mu, cov] = mean_and_covariance(h[std::size_t(m)]);
    const GaussianPrior& old = priors.modality[std::size_t(m)];
    for (std::size_t j = 0; j < mu.size(); ++j)
      mu[j] = alpha * old.mean[j] + (1.0 - alpha) * mu[j];
    for (std::size_t j = 0; j < cov.data.size(); ++j)
      cov.data[j] = beta * old.cov.data[j] + (1.0 - beta) * cov.data[j];
    if (validate_psd) {
      SymEigen eig = sym_eigendecompose(cov);
      if (eig.eigenvalues.back() < -1e-8)
        throw NumericError("blended prior covariance lost positive semidefiniteness (modality " +
                           std::to_string(m) + ", min eigenvalue " +
                           std::to_string(eig.eigenvalues.back()) + ")");
    }
    means.push_back(std::move(mu));
    covs.push_back(std::move(cov));
  }
  return Priors::from_moments(std::move(means), std::move(covs), priors.ridge_scale,
                              priors.ridge_floor);
}

void enhance_instance(TtceState& state, double step_size) {
  int mm = state.priors.num_modalities();
  int n = state.hs[0].rows;

  for (int m = 0; m < mm; ++m) {
    const GaussianPrior& prior = state.priors.modality[std::size_t(m)];
    Matrix& hs = state.hs[std::size_t(m)];
    for (int i = 0; i < n; ++i) {
      Vec g = prior.mahalanobis_grad(hs.row(i));
      for (int j = 0; j < hs.cols; ++j) hs(i, j) -= step_size * g[std::size_t(j)];
    }
  }

  // simultaneous cross-modality update: all deltas read the previous iterate
  std::vector<Matrix> deltas;
  for (int m = 0; m < mm; ++m) deltas.emplace_back(n, state.hc[0].cols);
  Vec diff(std::size_t(state.hc[0].cols));
  for (int m = 0; m < mm; ++m)
    for (int mp = m + 1; mp < mm; ++mp) {
      const GaussianPrior& prior = state.priors.pair(m, mp);
      const Matrix& ha = state.hc[std::size_t(m)];
      const Matrix& hb = state.hc[std::size_t(mp)];
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ha.cols; ++j) diff[std::size_t(j)] = ha(i, j) - hb(i, j);
        Vec g = prior.mahalanobis_grad(diff);
        for (int j = 0; j < ha.cols; ++j) {
          deltas[std::size_t(m)](i, j) += g[std::size_t(j)];
          deltas[std::size_t(mp)](i, j) -= g[std::size_t(j)];
        }
      }
    }
  for (int m = 0; m < mm; ++m) {
    axpy_inplace(state.hc[std::size_t(m)], -step_size, deltas[std::size_t(m)]);
    if (!all_finite(state.hc[std::size_t(m)]) || !all_finite(state.hs[std::size_t(m)]))
      throw NumericError("test-time instance update diverged at iteration " +
                         std::to_string(state.iteration + 1) + ", modality " + std::to_string(m));
  }
}

TtceState init_ttce_state(const TahcdModel& model, const std::vector<Matrix>& x,
                          bool record_masks) {
  if (!model.cfg.use_saca)
    throw NumericError("test-time enhancement needs the per-sample experts (use_saca)");
  check_modalities(model, x);
  int mm = model.num_modalities();

  TtceState st;
  for (int m = 0; m < mm; ++m) {
    Matrix z = forward(model.encoders[std::size_t(m)], x[std::size_t(m)]);
    if (model.cfg.use_assa) {
      SymEigen sub = build_subspace(z, model.cfg.ridge_scale);
      Matrix mask_row = forward(model.mask_nets[std::size_t(m)], mask_input(sub.eigenvalues));
      Vec w(mask_row.data.begin(), mask_row.data.end());
      st.h.push_back(filter_features(z, sub.basis, w));
      st.subspaces.push_back(std::move(sub));
      st.masks.push_back(std::move(w));
    } else {
      st.h.push_back(std::move(z));
    }
  }
  st.priors = Priors::estimate(st.h, model.cfg.ridge_scale, model.cfg.ridge_floor);
  st.trace_priors = st.priors;
  for (int m = 0; m < mm; ++m) {
    ExpertSplit es = expert_split(model.experts_s[std::size_t(m)], st.h[std::size_t(m)]);
    ExpertSplit ec = expert_split(model.experts_c[std::size_t(m)], st.h[std::size_t(m)]);
    st.hs.push_back(std::move(es.kept));
    st.ns.push_back(std::move(es.removed));
    st.hc.push_back(std::move(ec.kept));
    st.nc.push_back(std::move(ec.removed));
    if (record_masks) {
      st.ws.push_back(std::move(es.mask));
      st.wc.push_back(std::move(ec.mask));
    }
  }
  return st;
}

static void record_trace(const TahcdModel& model, TtceState& st, const std::vector<Matrix>& x,
                         int iteration, const TtceAccuracyProbe* probe) {
  TtceTraceRow row;
  row.iteration = iteration;
  row.l_re = loss_reconstruction(model, st.h, st.ns, st.nc, x);
  // NLLs against the iteration-0 priors. The refresh rule moves the priors
  // toward the statistics of the evolving features, so measuring against the
  // current ones would confound stream movement with yardstick movement.
  SacaLoss sl = loss_saca(st.hs, st.hc, st.trace_priors);
  row.nll_s = sl.nll_s;
  row.nll_c = sl.nll_c;
  if (probe && *probe) row.accuracy = (*probe)(st);
  st.trace.push_back(row);
  st.iteration = iteration;
}

void ttce_iterate(const TahcdModel& model, TtceState& state, const std::vector<Matrix>& x,
                  const TtceConfig& cfg, int iterations,
                  const TtceAccuracyProbe* probe, bool with_trace) {
  if (cfg.step_size <= 0.0) throw ConfigError("ttce step_size must be positive");
  if (cfg.alpha < 0.0 || cfg.alpha > 1.0 || cfg.beta < 0.0 || cfg.beta > 1.0)
    throw ConfigError("ttce alpha/beta must lie in [0, 1]");
  if (with_trace && state.trace.empty()) record_trace(model, state, x, 0, probe);
  for (int e = 0; e < iterations; ++e) {
    enhance_global(model, state, x, cfg.step_size);
    state.priors = update_priors(state.priors, state.h, cfg.alpha, cfg.beta, cfg.validate_psd);
    enhance_instance(state, cfg.step_size);
    ++state.iteration;
    if (with_trace) record_trace(model, state, x, state.iteration, probe);
  }
}

TtceState run_ttce(const TahcdModel& model, const std::vector<Matrix>& x, const TtceConfig& cfg,
                   const TtceAccuracyProbe* probe) {
  if (cfg.iterations < 0) throw ConfigError("ttce iterations must be >= 0");
  TtceState st = init_ttce_state(model, x);
  ttce_iterate(model, st, x, cfg, cfg.iterations, probe);
  return st;
}

}  // namespace tahcd
