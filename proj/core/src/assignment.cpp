#include "panconf/assignment.hpp"

#include <algorithm>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace panconf {

std::vector<std::ptrdiff_t> solve_assignment(const CostMatrix& cost) {
  if (cost.values.size() != cost.rows * cost.cols) throw std::invalid_argument("cost matrix size mismatch");
  if (cost.cols > cost.rows) throw std::invalid_argument("more targets than predictions");
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite matching cost");
  }
  std::vector<std::ptrdiff_t> result(cost.rows, kUnassigned);
  if (cost.cols == 0) return result;

  // Targets play the role of "workers" (n <= m), predictions the "jobs".
  // Index 0 is a sentinel; real indices are 1-based.
  const std::size_t n = cost.cols;
  const std::size_t m = cost.rows;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);

  for (std::size_t target = 1; target <= n; ++target) {
    owner[0] = target;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(j - 1, i0 - 1) - u[i0] - v[j];
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
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) result[j - 1] = static_cast<std::ptrdiff_t>(owner[j] - 1);
  }
  return result;
}

double assignment_cost(const CostMatrix& cost, const std::vector<std::ptrdiff_t>& assignment) {
  std::vector<double> picked;
  for (std::size_t r = 0; r < assignment.size(); ++r) {
    if (assignment[r] != kUnassigned) picked.push_back(cost.at(r, static_cast<std::size_t>(assignment[r])));
  }
  std::sort(picked.begin(), picked.end());
  double total = 0.0;
  for (double v : picked) total += v;
  return total;
}

}  // namespace panconf
