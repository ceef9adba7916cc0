#include "rmtppad/matching.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rmtppad/errors.hpp"

namespace rmtppad {

Assignment solve_assignment(std::span<const double> cost, int64_t rows, int64_t cols) {
  if (rows > cols)
    throw InfeasibleError("cannot match " + std::to_string(rows) + " targets to " + std::to_string(cols) +
                          " predictions");
  if (static_cast<int64_t>(cost.size()) != rows * cols) throw ShapeError("cost matrix size mismatch");
  Assignment out;
  out.row_to_col.assign(rows, -1);
  if (rows == 0) return out;
  for (double c : cost)
    if (!std::isfinite(c)) throw InputError("cost matrix contains non-finite entries");

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual source.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int64_t> col_owner(cols + 1, 0), way(cols + 1, 0);
  auto at = [&](int64_t r, int64_t c) { return cost[(r - 1) * cols + (c - 1)]; };

  for (int64_t r = 1; r <= rows; ++r) {
    col_owner[0] = r;
    int64_t c0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[c0] = 1;
      const int64_t r0 = col_owner[c0];
      double delta = inf;
      int64_t c1 = 0;
      for (int64_t c = 1; c <= cols; ++c) {
        if (used[c]) continue;
        const double reduced = at(r0, c) - u[r0] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = c0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          c1 = c;
        }
      }
      for (int64_t c = 0; c <= cols; ++c) {
        if (used[c]) {
          u[col_owner[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      c0 = c1;
    } while (col_owner[c0] != 0);
    do {
      const int64_t c1 = way[c0];
      col_owner[c0] = col_owner[c1];
      c0 = c1;
    } while (c0 != 0);
  }

  for (int64_t c = 1; c <= cols; ++c)
    if (col_owner[c] != 0) out.row_to_col[col_owner[c] - 1] = c - 1;
  for (int64_t r = 0; r < rows; ++r) out.cost += cost[r * cols + out.row_to_col[r]];
  return out;
}

}  // namespace rmtppad
