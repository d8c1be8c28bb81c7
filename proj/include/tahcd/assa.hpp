#pragma once

#include <span>
#include <vector>

#include "tahcd/linalg.hpp"
#include "tahcd/matrix.hpp"

namespace tahcd {

// Global-level denoising: each modality's latent covariance is
// eigendecomposed and a learned sigmoid mask over the spectrum decides how
// much of each eigen-direction survives.

// Eigenbasis of the ridged covariance of z's rows, eigenvalues descending.
SymEigen build_subspace(const Matrix& z, double ridge_scale = kDefaultRidgeScale);

// Row vector the mask net consumes. Raw eigenvalues span orders of
// magnitude and saturate the first layer at init; log1p compresses them
// into the net's responsive range without touching ordering.
Matrix mask_input(std::span<const double> eigenvalues);

// P = z U diag(w): coordinates in the eigenbasis, scaled by the mask.
Matrix project(const Matrix& z, const Matrix& basis, std::span<const double> w);

// h = z U diag(w) U^T. If projection is given it receives P (reused by the
// alignment loss).
Matrix filter_features(const Matrix& z, const Matrix& basis, std::span<const double> w,
                       Matrix* projection = nullptr);

// Accumulates gradients of some loss through h = z U diag(w) U^T into dz
// and dw, given dL/dh.
void filter_backward(const Matrix& z, const Matrix& basis, std::span<const double> w,
                     const Matrix& dh, Matrix& dz, Vec& dw);

// Same routing for a loss expressed on the projection P = z U diag(w).
void project_backward(const Matrix& z, const Matrix& basis, std::span<const double> w,
                      const Matrix& dp, Matrix& dz, Vec& dw);

// Inter-class orthogonality: per modality, stack the l2-normalized class
// means and penalize the squared off-diagonal entries of their Gram matrix;
// the result is the mean over modalities. Classes absent from `labels` are
// skipped with a warning. Optional dh receives the gradient.
double loss_orthogonality(const std::vector<Matrix>& h, std::span<const int> labels,
                          int num_classes, std::vector<Matrix>* dh = nullptr);

// Subspace projection alignment: sum over ordered modality pairs of
// ||P^m - P^m'||_F^2 / N. Optional dp receives the gradient.
double loss_subspace_alignment(const std::vector<Matrix>& projections,
                               std::vector<Matrix>* dp = nullptr);

}  // namespace tahcd
