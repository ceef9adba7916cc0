#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/matching.hpp"

using namespace rmtppad;

namespace {

// Minimum over all injections rows -> cols by enumerating column permutations.
double brute_force(const std::vector<double>& cost, int64_t rows, int64_t cols) {
  std::vector<int64_t> perm(cols);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int64_t i = 0; i < rows; ++i) s += cost[i * cols + perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_SUITE("matching") {

TEST_CASE("identity cost picks the diagonal") {
  std::vector<double> c{0, 1, 1, 1, 0, 1, 1, 1, 0};
  auto a = solve_assignment(c, 3, 3);
  CHECK(a.row_to_col == (std::vector<int64_t>{0, 1, 2}));
  CHECK(a.cost == 0.0);
}

TEST_CASE("rectangular problems leave columns unused") {
  std::vector<double> c{5, 1, 9, 2, 8, 0};  // 2 x 3
  auto a = solve_assignment(c, 2, 3);
  CHECK(a.cost == 1.0);
  CHECK(a.row_to_col == (std::vector<int64_t>{1, 2}));
}

TEST_CASE("zero rows is a valid empty assignment") {
  auto a = solve_assignment({}, 0, 4);
  CHECK(a.row_to_col.empty());
  CHECK(a.cost == 0.0);
}

TEST_CASE("errors") {
  std::vector<double> c(6, 1.0);
  CHECK_THROWS_AS(solve_assignment(c, 3, 2), InfeasibleError);
  CHECK_THROWS_AS(solve_assignment(c, 2, 2), ShapeError);
  c[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solve_assignment(c, 2, 3), InputError);
}

TEST_CASE("integer costs equal the brute-force optimum exactly") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 6), val(-20, 20);
  for (int t = 0; t < 300; ++t) {
    const int64_t cols = dim(rng);
    const int64_t rows = std::uniform_int_distribution<int64_t>(0, cols)(rng);
    std::vector<double> c(rows * cols);
    for (auto& v : c) v = val(rng);
    auto a = solve_assignment(c, rows, cols);
    CHECK(a.cost == brute_force(c, rows, cols));
    std::vector<int64_t> used = a.row_to_col;
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
  }
}

}
