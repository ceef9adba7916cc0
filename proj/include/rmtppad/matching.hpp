#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rmtppad {

/// Optimal assignment of every row to a distinct column.
struct Assignment {
  std::vector<int64_t> row_to_col;
  double cost = 0.0;  // sum of cost[i][row_to_col[i]] in row order
};

/// Minimum-cost injective assignment for a row-major `rows x cols` cost matrix
/// with rows <= cols (shortest augmenting path Hungarian method, O(rows^2 cols)).
/// Throws InfeasibleError if rows > cols.
Assignment solve_assignment(std::span<const double> cost, int64_t rows, int64_t cols);

}  // namespace rmtppad
