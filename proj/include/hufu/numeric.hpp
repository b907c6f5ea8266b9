#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace hufu {

/// Singular values of a 3x3 matrix, descending. One-sided Jacobi on the
/// columns; every step depends only on scale-free ratios, so scaling the
/// input by 2^n scales the results by exactly 2^n (no rounding drift).
std::array<double, 3> svd3_singular_values(const std::array<float, 9>& m);

/// Maximum-total-weight assignment of rows to columns, rows <= cols.
/// Returns, per row, the chosen column (all distinct). O(rows^2 * cols).
std::vector<std::size_t> assignment_max(const std::vector<double>& weights,
                                        std::size_t rows, std::size_t cols);

} // namespace hufu
