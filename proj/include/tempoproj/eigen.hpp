#pragma once

#include <cstddef>
#include <vector>

#include "tempoproj/matrix.hpp"

namespace tempoproj {

/// Symmetric matrix stored as its packed upper triangle.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * (n + 1) / 2, fill) {}
  /// Uses the upper triangle of a square matrix; the lower triangle is ignored.
  static SymmetricMatrix from_upper(const Matrix& m);

  std::size_t order() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[index(i, j)]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[index(i, j)]; }
  Matrix dense() const;

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * n_ - i * (i - 1) / 2 + (j - i);
  }

  std::size_t n_ = 0;
  std::vector<double> data_;
};

struct EigenDecomposition {
  std::vector<double> values;  // descending
  Matrix vectors;              // column j pairs with values[j]
  std::size_t sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// 1e-10 * max(1, ||A||_F). Throws ErrorKind::Numerical after 100 sweeps.
EigenDecomposition jacobi_eigen(const SymmetricMatrix& m);

}  // namespace tempoproj
