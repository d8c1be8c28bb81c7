#pragma once

#include <span>
#include <utility>

#include "tahcd/matrix.hpp"

namespace tahcd {

// Stabilizing ridge added to covariances before factorization, scaled by the
// average eigenvalue: ridge = scale * trace(cov) / dim.
inline constexpr double kDefaultRidgeScale = 1e-4;

// Column means and the biased (divide-by-N) covariance of row samples.
std::pair<Vec, Matrix> mean_and_covariance(const Matrix& x);

struct SymEigen {
  Matrix basis;     // columns are orthonormal eigenvectors
  Vec eigenvalues;  // descending, paired with basis columns
};

// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
// Eigenvalues come back sorted descending; each eigenvector's sign is fixed
// so its largest-magnitude component is positive (stable across runs).
SymEigen sym_eigendecompose(const Matrix& a, double tol = 1e-12, int max_sweeps = 100);

// Lower Cholesky factor of (a + ridge * I). Throws NumericError if a pivot
// is non-positive after the ridge.
Matrix cholesky(const Matrix& a, double ridge = 0.0);

// Solve L y = b (forward) or L^T y = b (backward) in place.
void solve_lower(const Matrix& l, std::span<double> b);
void solve_lower_transposed(const Matrix& l, std::span<double> b);

// Multivariate Gaussian with a cached Cholesky factor of (cov + ridge I).
// The ridge keeps factorization alive when the covariance is rank-deficient;
// log_density and mahalanobis_grad both act on the ridged covariance.
struct GaussianPrior {
  Vec mean;
  Matrix cov;     // as given, without the ridge
  Matrix chol;    // lower factor of cov + ridge I
  double logdet = 0.0;
  double ridge = 0.0;

  int dim() const { return int(mean.size()); }

  // ridge = max(ridge_scale * trace / dim, ridge_floor). The absolute floor
  // matters to iterative consumers: a gradient step of size eta on the NLL
  // only contracts when eta < 2 * (lambda + ridge) for every eigenvalue.
  static GaussianPrior fit(Vec mean, Matrix cov, double ridge_scale = kDefaultRidgeScale,
                           double ridge_floor = 0.0);

  // Estimates mean/covariance from row samples, then fits.
  static GaussianPrior from_samples(const Matrix& x, double ridge_scale = kDefaultRidgeScale,
                                    double ridge_floor = 0.0);

  double log_density(std::span<const double> x) const;

  // Gradient of -log_density w.r.t. x: (cov + ridge I)^{-1} (x - mean).
  Vec mahalanobis_grad(std::span<const double> x) const;
};

}  // namespace tahcd
