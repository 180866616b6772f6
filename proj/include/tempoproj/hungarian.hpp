#pragma once

#include <cstddef>
#include <vector>

#include "tempoproj/matrix.hpp"

namespace tempoproj {

struct LinearAssignment {
  std::vector<std::size_t> column_of_row;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (O(n^3)).
LinearAssignment hungarian(const Matrix& cost);

/// Same for rows <= cols: every row gets a distinct column.
LinearAssignment hungarian_rectangular(const Matrix& cost);

}  // namespace tempoproj
