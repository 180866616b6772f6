#include "tempoproj/hungarian.hpp"

#include <cmath>
#include <limits>

#include "tempoproj/error.hpp"

namespace tempoproj {

LinearAssignment hungarian(const Matrix& cost) {
  if (cost.rows != cost.cols) {
    fail(ErrorKind::Shape, "hungarian needs a square matrix, got " + std::to_string(cost.rows) + "x" +
                               std::to_string(cost.cols));
  }
  return hungarian_rectangular(cost);
}

// Shortest augmenting paths with row/column potentials; 1-based internally.
LinearAssignment hungarian_rectangular(const Matrix& cost) {
  const std::size_t n = cost.rows, m = cost.cols;
  if (n > m) fail(ErrorKind::Shape, "hungarian_rectangular needs rows <= cols");
  for (double v : cost.data) {
    if (!std::isfinite(v)) fail(ErrorKind::Parameter, "hungarian: cost matrix has non-finite entries");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> match(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  LinearAssignment out;
  out.column_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (match[j] != 0) out.column_of_row[match[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) out.cost += cost(i, out.column_of_row[i]);
  return out;
}

}  // namespace tempoproj
