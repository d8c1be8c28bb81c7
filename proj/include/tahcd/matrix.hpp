#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tahcd {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Everything in this project is desk
// scale, so we keep it simple: value semantics, no views beyond row spans.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0);

  static Matrix identity(int n);
  static Matrix from_rows(const std::vector<Vec>& rows);

  double& operator()(int i, int j) { return data[std::size_t(i) * cols + j]; }
  double operator()(int i, int j) const { return data[std::size_t(i) * cols + j]; }

  std::span<double> row(int i) { return {data.data() + std::size_t(i) * cols, std::size_t(cols)}; }
  std::span<const double> row(int i) const {
    return {data.data() + std::size_t(i) * cols, std::size_t(cols)};
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);
void sub_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double s);
void axpy_inplace(Matrix& a, double s, const Matrix& b);  // a += s * b

Matrix hadamard(const Matrix& a, const Matrix& b);

// Multiply column j of a by w[j] (i.e. a * diag(w)).
Matrix scale_cols(const Matrix& a, std::span<const double> w);
// Multiply row i of a by w[i] (i.e. diag(w) * a).
Matrix scale_rows(const Matrix& a, std::span<const double> w);
void scale_rows_inplace(Matrix& a, std::span<const double> w);

Vec col_means(const Matrix& a);
Vec col_sums(const Matrix& a);

double frobenius_norm(const Matrix& a);
double frobenius_sq(const Matrix& a);
double max_abs(const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);

bool all_finite(const Matrix& a);
bool all_finite(std::span<const double> v);
// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& a, const char* what);

}  // namespace tahcd
