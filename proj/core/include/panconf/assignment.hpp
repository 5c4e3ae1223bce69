#pragma once

#include <cstddef>
#include <vector>

namespace panconf {

/// Dense row-major cost matrix, rows = predictions, cols = targets.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline constexpr std::ptrdiff_t kUnassigned = -1;

/// Minimum-cost assignment of every column to a distinct row (rows >= cols).
/// Returns, per row, the assigned column or kUnassigned. Shortest augmenting
/// path with potentials, O(cols^2 * rows).
std::vector<std::ptrdiff_t> solve_assignment(const CostMatrix& cost);

/// Sum of cost(r, assignment[r]) over assigned rows, accumulated in ascending
/// order so that assignments picking the same values report the same cost.
double assignment_cost(const CostMatrix& cost, const std::vector<std::ptrdiff_t>& assignment);

}  // namespace panconf
