#include "tahcd/saca.hpp"

#include <cmath>

#include "tahcd/errors.hpp"

namespace tahcd {

int Priors::pair_index(int m, int mp) const {
  int mm = num_modalities();
  if (m < 0 || mp <= m || mp >= mm) throw NumericError("Priors::pair_index: need 0 <= m < m'");
  // offset of row m in the flattened upper triangle
  return m * mm - m * (m + 1) / 2 + (mp - m - 1);
}

Priors Priors::estimate(const std::vector<Matrix>& h, double ridge_scale, double ridge_floor) {
  if (h.empty()) throw NumericError("Priors::estimate: no modalities");
  std::vector<Vec> means;
  std::vector<Matrix> covs;
  for (const Matrix& hm : h) {
    auto [mu, cov] = mean_and_covariance(hm);
    means.push_back(std::move(mu));
    covs.push_back(std::move(cov));
  }
  return from_moments(std::move(means), std::move(covs), ridge_scale, ridge_floor);
}

Priors Priors::from_moments(std::vector<Vec> means, std::vector<Matrix> covs,
                            double ridge_scale, double ridge_floor) {
  Priors p;
  p.ridge_scale = ridge_scale;
  p.ridge_floor = ridge_floor;
  int mm = int(means.size());
  for (int m = 0; m < mm; ++m)
    p.modality.push_back(
        GaussianPrior::fit(means[std::size_t(m)], covs[std::size_t(m)], ridge_scale, ridge_floor));
  for (int m = 0; m < mm; ++m)
    for (int mp = m + 1; mp < mm; ++mp) {
      const Vec& mu_a = means[std::size_t(m)];
      const Vec& mu_b = means[std::size_t(mp)];
      if (mu_a.size() != mu_b.size())
        throw NumericError("Priors: modalities disagree on latent dimension");
      Vec mu(mu_a.size());
      for (std::size_t j = 0; j < mu.size(); ++j) mu[j] = mu_a[j] - mu_b[j];
      Matrix cov = add(covs[std::size_t(m)], covs[std::size_t(mp)]);
      p.cross.push_back(GaussianPrior::fit(std::move(mu), std::move(cov), ridge_scale, ridge_floor));
    }
  return p;
}

ExpertSplit expert_split(const Mlp& expert, const Matrix& h, Tape* tape) {
  ExpertSplit out;
  out.mask = forward(expert, h, tape);
  if (!out.mask.same_shape(h))
    throw NumericError("expert_split: expert output shape differs from input");
  out.kept = hadamard(h, out.mask);
  out.removed = sub(h, out.kept);  // exact complement, kept + removed == h
  return out;
}

SacaLoss loss_saca(const std::vector<Matrix>& hs, const std::vector<Matrix>& hc,
                   const Priors& priors, bool want_grads) {
  int mm = priors.num_modalities();
  if (int(hs.size()) != mm || int(hc.size()) != mm)
    throw NumericError("loss_saca: feature list does not match prior count");
  SacaLoss out;
  if (want_grads) {
    for (const Matrix& h : hs) out.d_hs.emplace_back(h.rows, h.cols);
    for (const Matrix& h : hc) out.d_hc.emplace_back(h.rows, h.cols);
  }

  for (int m = 0; m < mm; ++m) {
    const Matrix& h = hs[std::size_t(m)];
    const GaussianPrior& prior = priors.modality[std::size_t(m)];
    double acc = 0.0;
    for (int i = 0; i < h.rows; ++i) {
      acc -= prior.log_density(h.row(i));
      if (want_grads) {
        Vec g = prior.mahalanobis_grad(h.row(i));
        for (int j = 0; j < h.cols; ++j) out.d_hs[std::size_t(m)](i, j) += g[std::size_t(j)] / h.rows;
      }
    }
    out.nll_s += acc / h.rows;
  }

  for (int m = 0; m < mm; ++m)
    for (int mp = m + 1; mp < mm; ++mp) {
      const Matrix& ha = hc[std::size_t(m)];
      const Matrix& hb = hc[std::size_t(mp)];
      if (!ha.same_shape(hb)) throw NumericError("loss_saca: cross features disagree in shape");
      const GaussianPrior& prior = priors.pair(m, mp);
      double acc = 0.0;
      Vec diff(std::size_t(ha.cols));
      for (int i = 0; i < ha.rows; ++i) {
        for (int j = 0; j < ha.cols; ++j) diff[std::size_t(j)] = ha(i, j) - hb(i, j);
        acc -= prior.log_density(diff);
        if (want_grads) {
          Vec g = prior.mahalanobis_grad(diff);
          for (int j = 0; j < ha.cols; ++j) {
            out.d_hc[std::size_t(m)](i, j) += g[std::size_t(j)] / ha.rows;
            out.d_hc[std::size_t(mp)](i, j) -= g[std::size_t(j)] / ha.rows;
          }
        }
      }
      out.nll_c += acc / ha.rows;
    }
  return out;
}

Matrix neg_confidence(const std::vector<Matrix>& h, const Priors& priors) {
  int mm = priors.num_modalities();
  if (int(h.size()) != mm) throw NumericError("neg_confidence: feature/prior count mismatch");
  int n = h[0].rows;
  Matrix out(n, mm);
  Vec score(static_cast<std::size_t>(mm));
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < mm; ++m) {
      const Matrix& hm = h[std::size_t(m)];
      double logp = priors.modality[std::size_t(m)].log_density(hm.row(i));
      double c = std::exp(logp / hm.cols);  // per-dimension geometric-mean likelihood
      score[std::size_t(m)] = 1.0 - std::tanh(c);
    }
    double mx = score[0];
    for (int m = 1; m < mm; ++m) mx = std::max(mx, score[std::size_t(m)]);
    double denom = 0.0;
    for (int m = 0; m < mm; ++m) denom += std::exp(score[std::size_t(m)] - mx);
    for (int m = 0; m < mm; ++m) out(i, m) = std::exp(score[std::size_t(m)] - mx) / denom;
  }
  return out;
}

double loss_strict_alignment(const std::vector<Matrix>& hc, std::vector<Matrix>* d_hc) {
  if (hc.empty()) throw NumericError("loss_strict_alignment: no modalities");
  if (d_hc) {
    d_hc->clear();
    for (const Matrix& h : hc) d_hc->emplace_back(h.rows, h.cols);
  }
  int mm = int(hc.size());
  double total = 0.0;
  constexpr double kEps = 1e-12;
  for (int m = 0; m < mm; ++m)
    for (int mp = m + 1; mp < mm; ++mp) {
      const Matrix& ha = hc[std::size_t(m)];
      const Matrix& hb = hc[std::size_t(mp)];
      int n = ha.rows;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        auto a = ha.row(i);
        auto b = hb.row(i);
        double ab = dot(a, b);
        double na = std::sqrt(std::max(dot(a, a), kEps));
        double nb = std::sqrt(std::max(dot(b, b), kEps));
        double cosv = ab / (na * nb);
        acc += 1.0 - cosv;
        if (d_hc) {
          // d(1-cos)/da = -(b/(na nb) - cos * a/na^2), mean over samples
          for (int j = 0; j < ha.cols; ++j) {
            double da = -(b[std::size_t(j)] / (na * nb) - cosv * a[std::size_t(j)] / (na * na));
            double db = -(a[std::size_t(j)] / (na * nb) - cosv * b[std::size_t(j)] / (nb * nb));
            (*d_hc)[std::size_t(m)](i, j) += da / n;
            (*d_hc)[std::size_t(mp)](i, j) += db / n;
          }
        }
      }
      total += acc / n;
    }
  return total;
}

}  // namespace tahcd
