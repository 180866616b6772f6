#include "tempoproj/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tempoproj/error.hpp"

namespace tempoproj {

namespace {

constexpr std::size_t kMaxSweeps = 100;
constexpr double kTolerance = 1e-10;

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = i + 1; j < a.cols; ++j) s += 2.0 * a(i, j) * a(i, j);
  }
  return std::sqrt(s);
}

}  // namespace

SymmetricMatrix SymmetricMatrix::from_upper(const Matrix& m) {
  if (m.rows != m.cols) fail(ErrorKind::Shape, "symmetric matrix must be square");
  SymmetricMatrix s(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = i; j < m.cols; ++j) s(i, j) = m(i, j);
  }
  return s;
}

Matrix SymmetricMatrix::dense() const {
  Matrix m(n_, n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i; j < n_; ++j) m(i, j) = m(j, i) = (*this)(i, j);
  }
  return m;
}

EigenDecomposition jacobi_eigen(const SymmetricMatrix& sym) {
  const std::size_t n = sym.order();
  Matrix a = sym.dense();
  for (double v : a.data) {
    if (!std::isfinite(v)) fail(ErrorKind::Numerical, "eigensolver input has non-finite entries");
  }
  Matrix vt(n, n);
  for (std::size_t i = 0; i < n; ++i) vt(i, i) = 1.0;

  double frob = 0.0;
  for (double x : a.data) frob += x * x;
  const double tol = kTolerance * std::max(1.0, std::sqrt(frob));

  EigenDecomposition out;
  while (off_diagonal_norm(a) >= tol) {
    if (out.sweeps == kMaxSweeps) {
      fail(ErrorKind::Numerical, "jacobi eigensolver did not converge in " + std::to_string(kMaxSweeps) + " sweeps");
    }
    ++out.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        double* rp = &a(p, 0);
        double* rq = &a(q, 0);
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = rp[k], akq = rq[k];
          rp[k] = c * akp - s * akq;
          rq[k] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          a(k, p) = rp[k];
          a(k, q) = rq[k];
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;
        // Rows of vt are eigenvectors.
        double* vp = &vt(p, 0);
        double* vq = &vt(q, 0);
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vp[k], vkq = vq[k];
          vp[k] = c * vkp - s * vkq;
          vq[k] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = vt(order[j], i);
  }
  return out;
}

}  // namespace tempoproj
