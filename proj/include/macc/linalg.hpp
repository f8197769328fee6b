#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace macc {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(const Vec& x, double alpha) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = alpha * x[i];
  return y;
}

/// Dense row-major matrix, sized for desk-scale problems.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  Vec row(int r) const {
    Vec out(cols_);
    for (int c = 0; c < cols_; ++c) out[c] = (*this)(r, c);
    return out;
  }

  Vec multiply(const Vec& x) const {
    if (static_cast<int>(x.size()) != cols_) throw std::invalid_argument("Matrix::multiply: size mismatch");
    Vec y(rows_, 0.0);
    for (int r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols_; ++c) s += (*this)(r, c) * x[c];
      y[r] = s;
    }
    return y;
  }

  Vec multiply_transposed(const Vec& x) const {
    if (static_cast<int>(x.size()) != rows_) throw std::invalid_argument("Matrix::multiply_transposed: size mismatch");
    Vec y(cols_, 0.0);
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) y[c] += (*this)(r, c) * x[r];
    return y;
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

struct SolveResult {
  Vec x;
  double condition_estimate = 0.0;
  bool condition_warning = false;
};

/// Solves A x = b by Gaussian elimination with partial pivoting.
/// Emits a condition warning (ratio of extreme pivots) above 1e12.
inline SolveResult solve_linear(Matrix a, Vec b, double warn_threshold = 1e12) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n)
    throw std::invalid_argument("solve_linear: shape mismatch");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  double max_pivot = 0.0, min_pivot = 0.0;
  for (int k = 0; k < n; ++k) {
    int best = k;
    for (int r = k + 1; r < n; ++r)
      if (std::fabs(a(r, k)) > std::fabs(a(best, k))) best = r;
    if (best != k) {
      for (int c = 0; c < n; ++c) std::swap(a(k, c), a(best, c));
      std::swap(b[k], b[best]);
    }
    double pivot = a(k, k);
    if (std::fabs(pivot) < 1e-300)
      throw std::runtime_error("solve_linear: singular system");
    max_pivot = std::max(max_pivot, std::fabs(pivot));
    min_pivot = (k == 0) ? std::fabs(pivot) : std::min(min_pivot, std::fabs(pivot));
    for (int r = k + 1; r < n; ++r) {
      double f = a(r, k) / pivot;
      if (f == 0.0) continue;
      for (int c = k; c < n; ++c) a(r, c) -= f * a(k, c);
      b[r] -= f * b[k];
    }
  }
  Vec x(n, 0.0);
  for (int k = n - 1; k >= 0; --k) {
    double s = b[k];
    for (int c = k + 1; c < n; ++c) s -= a(k, c) * x[c];
    x[k] = s / a(k, k);
  }
  SolveResult res;
  res.x = std::move(x);
  res.condition_estimate = (min_pivot > 0.0) ? max_pivot / min_pivot : 1e300;
  res.condition_warning = res.condition_estimate > warn_threshold;
  return res;
}

/// Spectral norm of a symmetric PSD matrix by power iteration. Several
/// deterministic starts guard against a start vector inside a null space.
inline double spectral_norm_symmetric(const Matrix& m, int iters = 500) {
  const int n = m.rows();
  auto run = [&](Vec v) {
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
      Vec w = m.multiply(v);
      double nw = norm2(w);
      if (nw < 1e-300) return 0.0;
      for (int i = 0; i < n; ++i) v[i] = w[i] / nw;
      lambda = nw;
    }
    return lambda;
  };
  double best = 0.0;
  for (int start = 0; start < 3; ++start) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = std::cos(0.37 * (i + 1) * (start + 1) + 0.21 * start) + 1e-3 * (i == start);
    double nv = norm2(v);
    for (double& x : v) x /= nv;
    best = std::max(best, run(std::move(v)));
  }
  return best;
}

/// Gram-Schmidt orthonormal basis of the span of the given vectors.
inline std::vector<Vec> orthonormal_basis(const std::vector<Vec>& vectors, double tol = 1e-10) {
  std::vector<Vec> basis;
  for (const Vec& v0 : vectors) {
    Vec v = v0;
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& q : basis) axpy(-dot(q, v), q, v);
    double n = norm2(v);
    double n0 = norm2(v0);
    if (n > tol * std::max(1.0, n0)) {
      for (double& x : v) x /= n;
      basis.push_back(std::move(v));
    }
  }
  return basis;
}

/// Column rank of a matrix via Gram-Schmidt on its columns.
inline int column_rank(const Matrix& m, double tol = 1e-9) {
  std::vector<Vec> cols;
  cols.reserve(m.cols());
  for (int c = 0; c < m.cols(); ++c) {
    Vec col(m.rows());
    for (int r = 0; r < m.rows(); ++r) col[r] = m(r, c);
    cols.push_back(std::move(col));
  }
  return static_cast<int>(orthonormal_basis(cols, tol).size());
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty input");
  std::sort(xs.begin(), xs.end());
  std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace macc
