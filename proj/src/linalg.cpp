#include "tahcd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "tahcd/errors.hpp"

namespace tahcd {

std::pair<Vec, Matrix> mean_and_covariance(const Matrix& x) {
  if (x.rows < 1) throw NumericError("mean_and_covariance: need at least one sample");
  Vec mu = col_means(x);
  Matrix centered = x;
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) centered(i, j) -= mu[j];
  Matrix cov = matmul_tn(centered, centered);
  scale_inplace(cov, 1.0 / x.rows);
  // enforce exact symmetry against accumulation order differences
  for (int i = 0; i < cov.rows; ++i)
    for (int j = i + 1; j < cov.cols; ++j) {
      double v = 0.5 * (cov(i, j) + cov(j, i));
      cov(i, j) = v;
      cov(j, i) = v;
    }
  return {std::move(mu), std::move(cov)};
}

static double max_offdiag(const Matrix& a) {
  double m = 0.0;
  for (int i = 0; i < a.rows; ++i)
    for (int j = i + 1; j < a.cols; ++j) m = std::max(m, std::fabs(a(i, j)));
  return m;
}

SymEigen sym_eigendecompose(const Matrix& a, double tol, int max_sweeps) {
  if (a.rows != a.cols) throw NumericError("sym_eigendecompose: matrix must be square");
  int n = a.rows;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::fabs(a(i, j) - a(j, i)) > 1e-9 * std::max(1.0, max_abs(a)))
        throw NumericError("sym_eigendecompose: matrix is not symmetric");

  Matrix d = a;
  Matrix v = Matrix::identity(n);

  for (int sweep = 0; sweep < max_sweeps && max_offdiag(d) > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = d(p, q);
        if (std::fabs(apq) <= tol) continue;
        // classic two-sided rotation zeroing d(p,q)
        double theta = (d(q, q) - d(p, p)) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        double tau = s / (1.0 + c);

        double dpp = d(p, p), dqq = d(q, q);
        d(p, p) = dpp - t * apq;
        d(q, q) = dqq + t * apq;
        d(p, q) = 0.0;
        d(q, p) = 0.0;
        for (int k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          double dkp = d(k, p), dkq = d(k, q);
          d(k, p) = dkp - s * (dkq + tau * dkp);
          d(p, k) = d(k, p);
          d(k, q) = dkq + s * (dkp - tau * dkq);
          d(q, k) = d(k, q);
        }
        for (int k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = vkp - s * (vkq + tau * vkp);
          v(k, q) = vkq + s * (vkp - tau * vkq);
        }
      }
    }
  }

  SymEigen out;
  out.eigenvalues.resize(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return d(i, i) > d(j, j); });

  out.basis = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    int src = order[std::size_t(j)];
    out.eigenvalues[std::size_t(j)] = d(src, src);
    // fix the sign: largest-magnitude component positive
    int arg = 0;
    for (int k = 1; k < n; ++k)
      if (std::fabs(v(k, src)) > std::fabs(v(arg, src))) arg = k;
    double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    for (int k = 0; k < n; ++k) out.basis(k, j) = sign * v(k, src);
  }
  return out;
}

Matrix cholesky(const Matrix& a, double ridge) {
  if (a.rows != a.cols) throw NumericError("cholesky: matrix must be square");
  int n = a.rows;
  Matrix l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j) + (i == j ? ridge : 0.0);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0)
          throw NumericError("cholesky: non-positive pivot at index " + std::to_string(i) +
                             " (matrix not positive definite)");
        l(i, j) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

void solve_lower(const Matrix& l, std::span<double> b) {
  int n = l.rows;
  for (int i = 0; i < n; ++i) {
    double s = b[std::size_t(i)];
    for (int k = 0; k < i; ++k) s -= l(i, k) * b[std::size_t(k)];
    b[std::size_t(i)] = s / l(i, i);
  }
}

void solve_lower_transposed(const Matrix& l, std::span<double> b) {
  int n = l.rows;
  for (int i = n - 1; i >= 0; --i) {
    double s = b[std::size_t(i)];
    for (int k = i + 1; k < n; ++k) s -= l(k, i) * b[std::size_t(k)];
    b[std::size_t(i)] = s / l(i, i);
  }
}

GaussianPrior GaussianPrior::fit(Vec mean, Matrix cov, double ridge_scale, double ridge_floor) {
  if (cov.rows != cov.cols || int(mean.size()) != cov.rows)
    throw NumericError("GaussianPrior: mean/covariance shapes disagree");
  GaussianPrior g;
  g.mean = std::move(mean);
  double trace = 0.0;
  for (int i = 0; i < cov.rows; ++i) trace += cov(i, i);
  g.ridge = cov.rows > 0 ? std::max(ridge_scale * trace / cov.rows, ridge_floor) : 0.0;
  g.chol = cholesky(cov, g.ridge);
  g.logdet = 0.0;
  for (int i = 0; i < g.chol.rows; ++i) g.logdet += 2.0 * std::log(g.chol(i, i));
  g.cov = std::move(cov);
  return g;
}

GaussianPrior GaussianPrior::from_samples(const Matrix& x, double ridge_scale,
                                          double ridge_floor) {
  auto [mu, cov] = mean_and_covariance(x);
  return fit(std::move(mu), std::move(cov), ridge_scale, ridge_floor);
}

double GaussianPrior::log_density(std::span<const double> x) const {
  int d = dim();
  if (int(x.size()) != d) throw NumericError("GaussianPrior::log_density: wrong dimension");
  Vec y(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) y[std::size_t(i)] = x[std::size_t(i)] - mean[std::size_t(i)];
  solve_lower(chol, y);  // y = L^{-1} (x - mu), so |y|^2 is the Mahalanobis term
  double quad = dot(y, y);
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

Vec GaussianPrior::mahalanobis_grad(std::span<const double> x) const {
  int d = dim();
  if (int(x.size()) != d) throw NumericError("GaussianPrior::mahalanobis_grad: wrong dimension");
  Vec y(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) y[std::size_t(i)] = x[std::size_t(i)] - mean[std::size_t(i)];
  solve_lower(chol, y);
  solve_lower_transposed(chol, y);  // y = (cov + ridge I)^{-1} (x - mu)
  return y;
}

}  // namespace tahcd
