#include "tahcd/matrix.hpp"

#include <cmath>
#include <string>

#include "tahcd/errors.hpp"

namespace tahcd {

Matrix::Matrix(int r, int c, double fill)
    : rows(r), cols(c), data(std::size_t(r) * std::size_t(c), fill) {
  if (r < 0 || c < 0) throw NumericError("matrix dimensions must be non-negative");
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<Vec>& rows) {
  if (rows.empty()) return {};
  Matrix m(int(rows.size()), int(rows[0].size()));
  for (int i = 0; i < m.rows; ++i) {
    if (int(rows[i].size()) != m.cols) throw NumericError("ragged row list");
    for (int j = 0; j < m.cols; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

static void check_mul(int a_cols, int b_rows, const char* what) {
  if (a_cols != b_rows)
    throw NumericError(std::string(what) + ": inner dimensions disagree (" +
                       std::to_string(a_cols) + " vs " + std::to_string(b_rows) + ")");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_mul(a.cols, b.rows, "matmul");
  Matrix c(a.rows, b.cols);
  // i-k-j order keeps the inner loop contiguous for row-major storage.
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.data.data() + std::size_t(i) * a.cols;
    double* ci = c.data.data() + std::size_t(i) * c.cols;
    for (int k = 0; k < a.cols; ++k) {
      double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.data.data() + std::size_t(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_mul(a.cols, b.cols, "matmul_nt");
  Matrix c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* ai = a.data.data() + std::size_t(i) * a.cols;
    for (int j = 0; j < b.rows; ++j) {
      const double* bj = b.data.data() + std::size_t(j) * b.cols;
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_mul(a.rows, b.rows, "matmul_tn");
  Matrix c(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k) {
    const double* ak = a.data.data() + std::size_t(k) * a.cols;
    const double* bk = b.data.data() + std::size_t(k) * b.cols;
    for (int i = 0; i < a.cols; ++i) {
      double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.data.data() + std::size_t(i) * c.cols;
      for (int j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

static void check_same(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) throw NumericError(std::string(what) + ": shape mismatch");
}

Matrix add(const Matrix& a, const Matrix& b) {
  check_same(a, b, "add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  check_same(a, b, "sub");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] -= b.data[i];
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  check_same(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void sub_inplace(Matrix& a, const Matrix& b) {
  check_same(a, b, "sub_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] -= b.data[i];
}

void scale_inplace(Matrix& a, double s) {
  for (double& v : a.data) v *= s;
}

void axpy_inplace(Matrix& a, double s, const Matrix& b) {
  check_same(a, b, "axpy_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  check_same(a, b, "hadamard");
  Matrix c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= b.data[i];
  return c;
}

Matrix scale_cols(const Matrix& a, std::span<const double> w) {
  if (int(w.size()) != a.cols) throw NumericError("scale_cols: weight length != cols");
  Matrix c = a;
  for (int i = 0; i < c.rows; ++i)
    for (int j = 0; j < c.cols; ++j) c(i, j) *= w[j];
  return c;
}

Matrix scale_rows(const Matrix& a, std::span<const double> w) {
  Matrix c = a;
  scale_rows_inplace(c, w);
  return c;
}

void scale_rows_inplace(Matrix& a, std::span<const double> w) {
  if (int(w.size()) != a.rows) throw NumericError("scale_rows: weight length != rows");
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) a(i, j) *= w[i];
}

Vec col_means(const Matrix& a) {
  Vec m = col_sums(a);
  if (a.rows > 0)
    for (double& v : m) v /= a.rows;
  return m;
}

Vec col_sums(const Matrix& a) {
  Vec s(a.cols, 0.0);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) s[j] += a(i, j);
  return s;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_sq(a)); }

double frobenius_sq(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::fabs(v));
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(const Matrix& a) { return all_finite(std::span<const double>(a.data)); }

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void require_finite(const Matrix& a, const char* what) {
  if (!all_finite(a)) throw NumericError(std::string(what) + ": non-finite entries");
}

}  // namespace tahcd
