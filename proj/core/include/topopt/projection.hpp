#pragma once

#include <span>

#include "topopt/linalg.hpp"

/// Euclidean projection onto X = { lo <= v <= hi, sum(v) <= v_bar }.
namespace topopt::projection {

struct SimplexBounds {
  double v_lo = 0.1;
  double v_hi = 1.0;
  double v_bar = 0.0;

  /// Throws std::invalid_argument unless 0 < v_lo < v_hi and
  /// n * v_lo <= v_bar <= n * v_hi.
  void validate(std::size_t n) const;
};

/// Elementwise clamp to [lo, hi].
Vector project_box(std::span<const double> v, double lo, double hi);

/// Writes the projection of v onto X into `out` and returns the budget
/// multiplier lambda >= 0, so that out = clamp(v - lambda, v_lo, v_hi).
/// Runs in O(n log n): the 2n breakpoints of the piecewise-linear budget
/// equation are sorted once and scanned with a running slope.
double project_simplex(std::span<const double> v, const SimplexBounds& bounds,
                       std::span<double> out);
Vector project_simplex(std::span<const double> v, const SimplexBounds& bounds);

} // namespace topopt::projection
