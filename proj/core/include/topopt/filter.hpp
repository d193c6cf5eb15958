#pragma once

#include <span>
#include <vector>

#include "topopt/linalg.hpp"

/// Separable Gaussian density filter and its exact adjoint.
namespace topopt::filter {

struct FilterSpec {
  int size = 7;        ///< odd kernel width in elements
  double sigma = 1.5;  ///< standard deviation in element units

  void validate() const;
  bool operator==(const FilterSpec&) const = default;
};

/// Normalized 1-D Gaussian weights of length spec.size.
Vector gaussian_weights(const FilterSpec& spec);

/// x-pass then y-pass. At the boundary the kernel is truncated and the
/// remaining weights renormalized, so every output is a convex combination
/// of inputs.
Vector apply_filter(std::span<const double> field, int nx, int ny, const FilterSpec& spec);

/// Transpose of apply_filter (including the boundary renormalization).
Vector apply_filter_adjoint(std::span<const double> field, int nx, int ny,
                            const FilterSpec& spec);

} // namespace topopt::filter
