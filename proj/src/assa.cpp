#include "tahcd/assa.hpp"

#include <cmath>
#include <iostream>

#include "tahcd/errors.hpp"

namespace tahcd {

SymEigen build_subspace(const Matrix& z, double ridge_scale) {
  if (z.rows < 2) throw NumericError("build_subspace: need at least two samples");
  auto [mu, cov] = mean_and_covariance(z);
  (void)mu;
  double trace = 0.0;
  for (int i = 0; i < cov.rows; ++i) trace += cov(i, i);
  double ridge = ridge_scale * trace / cov.rows;
  for (int i = 0; i < cov.rows; ++i) cov(i, i) += ridge;
  return sym_eigendecompose(cov);
}

Matrix mask_input(std::span<const double> eigenvalues) {
  Matrix row(1, int(eigenvalues.size()));
  for (int j = 0; j < row.cols; ++j)
    row(0, j) = std::log1p(std::max(eigenvalues[std::size_t(j)], 0.0));
  return row;
}

Matrix project(const Matrix& z, const Matrix& basis, std::span<const double> w) {
  Matrix p = matmul(z, basis);
  if (int(w.size()) != p.cols) throw NumericError("project: mask length != latent dim");
  for (int i = 0; i < p.rows; ++i)
    for (int j = 0; j < p.cols; ++j) p(i, j) *= w[std::size_t(j)];
  return p;
}

Matrix filter_features(const Matrix& z, const Matrix& basis, std::span<const double> w,
                       Matrix* projection) {
  Matrix p = project(z, basis, w);
  Matrix h = matmul_nt(p, basis);  // P U^T
  if (projection) *projection = std::move(p);
  return h;
}

void project_backward(const Matrix& z, const Matrix& basis, std::span<const double> w,
                      const Matrix& dp, Matrix& dz, Vec& dw) {
  // P = (zU) diag(w): dz += dP diag(w) U^T, dw_j += sum_i dP_ij (zU)_ij
  Matrix dp_w = scale_cols(dp, w);
  add_inplace(dz, matmul_nt(dp_w, basis));
  Matrix zu = matmul(z, basis);
  for (int i = 0; i < dp.rows; ++i)
    for (int j = 0; j < dp.cols; ++j) dw[std::size_t(j)] += dp(i, j) * zu(i, j);
}

void filter_backward(const Matrix& z, const Matrix& basis, std::span<const double> w,
                     const Matrix& dh, Matrix& dz, Vec& dw) {
  // h = P U^T, so dP = dh U; then reuse the projection rule.
  Matrix dp = matmul(dh, basis);
  project_backward(z, basis, w, dp, dz, dw);
}

double loss_orthogonality(const std::vector<Matrix>& h, std::span<const int> labels,
                          int num_classes, std::vector<Matrix>* dh) {
  if (h.empty()) throw NumericError("loss_orthogonality: no modalities");
  int n = h[0].rows;
  if (int(labels.size()) != n)
    throw NumericError("loss_orthogonality: label count != rows");

  if (dh) {
    dh->clear();
    for (const Matrix& hm : h) dh->emplace_back(hm.rows, hm.cols);
  }

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < n; ++i) {
    int y = labels[std::size_t(i)];
    if (y < 0 || y >= num_classes) throw NumericError("loss_orthogonality: label out of range");
    by_class[std::size_t(y)].push_back(i);
  }
  std::vector<int> present;
  for (int c = 0; c < num_classes; ++c) {
    if (by_class[std::size_t(c)].empty())
      std::cerr << "warning: class " << c << " missing from this batch; skipped in L_o\n";
    else
      present.push_back(c);
  }
  if (present.size() < 2) return 0.0;

  int m_count = int(h.size());
  double total = 0.0;
  for (int m = 0; m < m_count; ++m) {
    const Matrix& hm = h[std::size_t(m)];
    int d = hm.cols;
    int cc = int(present.size());

    Matrix means(cc, d);
    std::vector<double> norms(static_cast<std::size_t>(cc));
    Matrix units(cc, d);
    for (int a = 0; a < cc; ++a) {
      const auto& rows = by_class[std::size_t(present[std::size_t(a)])];
      for (int i : rows)
        for (int j = 0; j < d; ++j) means(a, j) += hm(i, j);
      for (int j = 0; j < d; ++j) means(a, j) /= double(rows.size());
      double nrm = 0.0;
      for (int j = 0; j < d; ++j) nrm += means(a, j) * means(a, j);
      nrm = std::sqrt(nrm);
      norms[std::size_t(a)] = nrm;
      if (nrm < 1e-12) {
        norms[std::size_t(a)] = 1e-12;  // degenerate mean: treat direction as zero
        continue;
      }
      for (int j = 0; j < d; ++j) units(a, j) = means(a, j) / nrm;
    }

    Matrix gram = matmul_nt(units, units);
    double lm = 0.0;
    for (int a = 0; a < cc; ++a)
      for (int b = 0; b < cc; ++b)
        if (a != b) lm += gram(a, b) * gram(a, b);
    total += lm;

    if (dh) {
      // dL/du_a = 4 sum_{b != a} (u_a . u_b) u_b  (both ordered pairs hit (a,b))
      Matrix du(cc, d);
      for (int a = 0; a < cc; ++a)
        for (int b = 0; b < cc; ++b) {
          if (a == b) continue;
          double g = 4.0 * gram(a, b);
          for (int j = 0; j < d; ++j) du(a, j) += g * units(b, j);
        }
      // through u = mean/|mean|: dmean = (du - (du.u) u) / |mean|
      for (int a = 0; a < cc; ++a) {
        double proj = 0.0;
        for (int j = 0; j < d; ++j) proj += du(a, j) * units(a, j);
        const auto& rows = by_class[std::size_t(present[std::size_t(a)])];
        double inv = 1.0 / (norms[std::size_t(a)] * double(rows.size()) * double(m_count));
        for (int i : rows)
          for (int j = 0; j < d; ++j)
            (*dh)[std::size_t(m)](i, j) += (du(a, j) - proj * units(a, j)) * inv;
      }
    }
  }
  return total / double(m_count);
}

double loss_subspace_alignment(const std::vector<Matrix>& projections,
                               std::vector<Matrix>* dp) {
  if (projections.empty()) throw NumericError("loss_subspace_alignment: no modalities");
  if (dp) {
    dp->clear();
    for (const Matrix& p : projections) dp->emplace_back(p.rows, p.cols);
  }
  if (projections.size() == 1) {
    std::cerr << "warning: single modality; subspace alignment loss is 0\n";
    return 0.0;
  }
  int n = projections[0].rows;
  double total = 0.0;
  for (std::size_t a = 0; a < projections.size(); ++a)
    for (std::size_t b = a + 1; b < projections.size(); ++b) {
      Matrix diff = sub(projections[a], projections[b]);
      total += 2.0 * frobenius_sq(diff) / n;  // ordered pairs: (a,b) and (b,a)
      if (dp) {
        axpy_inplace((*dp)[a], 4.0 / n, diff);
        axpy_inplace((*dp)[b], -4.0 / n, diff);
      }
    }
  return total;
}

}  // namespace tahcd
