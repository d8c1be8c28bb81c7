#include "tahcd/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "tahcd/assa.hpp"
#include "tahcd/errors.hpp"

namespace tahcd {

FusionResult confidence_fuse(const std::vector<Matrix>& hs, const std::vector<Matrix>& hc,
                             const Priors& priors) {
  int mm = priors.num_modalities();
  if (int(hs.size()) != mm || int(hc.size()) != mm)
    throw NumericError("confidence_fuse: stream/prior count mismatch");
  int n = hs[0].rows, d = hs[0].cols;

  FusionResult out;
  out.weights = Matrix(n, 2 * mm);
  out.fused = Matrix(n, d);

  Vec score(std::size_t(2 * mm));
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < mm; ++m) {
      const GaussianPrior& prior = priors.modality[std::size_t(m)];
      score[std::size_t(m)] = std::exp(prior.log_density(hs[std::size_t(m)].row(i)) / d);
      score[std::size_t(mm + m)] = std::exp(prior.log_density(hc[std::size_t(m)].row(i)) / d);
    }
    double mx = *std::max_element(score.begin(), score.end());
    double denom = 0.0;
    for (double s : score) denom += std::exp(s - mx);
    for (int k = 0; k < 2 * mm; ++k) out.weights(i, k) = std::exp(score[std::size_t(k)] - mx) / denom;
    for (int m = 0; m < mm; ++m)
      for (int j = 0; j < d; ++j)
        out.fused(i, j) += out.weights(i, m) * hs[std::size_t(m)](i, j) +
                           out.weights(i, mm + m) * hc[std::size_t(m)](i, j);
  }
  return out;
}

PredictionBatch classify(const Mlp& classifier, const Matrix& features) {
  PredictionBatch out;
  out.logits = forward(classifier, features);
  out.probs = out.logits;
  for (int i = 0; i < out.probs.rows; ++i) {
    auto row = out.probs.row(i);
    double mx = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (double& v : row) v /= denom;
    int arg = 0;
    for (int j = 1; j < out.probs.cols; ++j)
      if (out.probs(i, j) > out.probs(i, arg)) arg = j;
    out.classes.push_back(arg);
  }
  return out;
}

double loss_cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* dlogits) {
  int n = logits.rows, c = logits.cols;
  if (int(labels.size()) != n) throw NumericError("cross entropy: label count != rows");
  if (dlogits) *dlogits = Matrix(n, c);
  double total = 0.0;
  Vec p(static_cast<std::size_t>(c));
  for (int i = 0; i < n; ++i) {
    int y = labels[std::size_t(i)];
    if (y < 0 || y >= c) throw NumericError("cross entropy: label out of range");
    double mx = logits(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      p[std::size_t(j)] = std::exp(logits(i, j) - mx);
      denom += p[std::size_t(j)];
    }
    total -= std::log(p[std::size_t(y)] / denom);
    if (dlogits)
      for (int j = 0; j < c; ++j)
        (*dlogits)(i, j) = (p[std::size_t(j)] / denom - (j == y ? 1.0 : 0.0)) / n;
  }
  return total / n;
}

double loss_total(double l_assa, double l_saca, double l_re, double l_cls) {
  return l_assa + l_saca + l_re + l_cls;
}

PipelineResult run_pipeline(const TahcdModel& model, const std::vector<Matrix>& x,
                            const TtceConfig& cfg, std::span<const int> labels) {
  PipelineResult out;
  if (model.cfg.use_saca) {
    TtceAccuracyProbe probe;
    if (!labels.empty()) {
      probe = [&](const TtceState& st) {
        FusionResult f = confidence_fuse(st.hs, st.hc, st.priors);
        PredictionBatch pred = classify(model.classifier, f.fused);
        int correct = 0;
        for (std::size_t i = 0; i < labels.size(); ++i)
          if (pred.classes[i] == labels[i]) ++correct;
        return double(correct) / double(labels.size());
      };
    }
    out.state = run_ttce(model, x, cfg, probe ? &probe : nullptr);
    FusionResult f = confidence_fuse(out.state.hs, out.state.hc, out.state.priors);
    out.fused = std::move(f.fused);
    out.fusion_weights = std::move(f.weights);
  } else {
    // expert-free ablations: average the (possibly filtered) latents
    int mm = model.num_modalities();
    Matrix mean;
    for (int m = 0; m < mm; ++m) {
      Matrix z = forward(model.encoders[std::size_t(m)], x[std::size_t(m)]);
      Matrix h;
      if (model.cfg.use_assa) {
        SymEigen sub = build_subspace(z, model.cfg.ridge_scale);
        Matrix mask_row = forward(model.mask_nets[std::size_t(m)], mask_input(sub.eigenvalues));
        Vec w(mask_row.data.begin(), mask_row.data.end());
        h = filter_features(z, sub.basis, w);
      } else {
        h = std::move(z);
      }
      if (m == 0) mean = std::move(h);
      else add_inplace(mean, h);
    }
    scale_inplace(mean, 1.0 / mm);
    out.fused = std::move(mean);
  }
  out.pred = classify(model.classifier, out.fused);
  return out;
}

}  // namespace tahcd
