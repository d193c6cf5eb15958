#pragma once

#include <span>
#include <vector>

#include "topopt/fea.hpp"
#include "topopt/linalg.hpp"

namespace topopt::krylov {

/// Dense least squares min ||rhs - A d|| by Householder QR.
///
/// `columns` holds A column by column (each of length `rows`) and is
/// overwritten. A column whose remaining norm after the previous reflections
/// falls below `drop_tol` times its original norm is treated as linearly
/// dependent: it is skipped and its coefficient is zero. Returns the
/// coefficient vector (one entry per column) and sets `rank`.
Vector householder_lstsq(std::span<double> columns, std::size_t rows, std::size_t cols,
                         std::span<const double> rhs, double drop_tol, int* rank = nullptr);

struct ApplyInfo {
  int basis_size = 0;  ///< number of powers K^1 b .. K^m b actually built
  int rank = 0;        ///< columns kept by the QR
};

/// Polynomial preconditioner M^{-1}(a) b = sum_{i=0}^{D} c_i K^i b, where c
/// minimizes ||b - sum_{i=1}^{D+1} c_{i-1} K^i b||. Since M^{-1} is a
/// polynomial in K it commutes with K.
///
/// The power basis is normalized while it is built (p_j = K p_{j-1} / n_j);
/// the coefficients are mapped back when the result is assembled. Holds its
/// basis storage between calls.
class KrylovPreconditioner {
 public:
  explicit KrylovPreconditioner(int dim, double drop_tol = 1e-10);

  int dim() const { return dim_; }

  ApplyInfo apply(const fea::GridModel& grid, std::span<const double> activation,
                  std::span<const double> b, std::span<double> out);

 private:
  int dim_;
  double drop_tol_;
  Vector basis_;  // (dim + 2) vectors p_0 .. p_{D+1}
  Vector work_;   // QR copy of p_1 .. p_{D+1}
};

/// One-shot convenience wrapper around KrylovPreconditioner.
Vector krylov_apply(const fea::GridModel& grid, std::span<const double> activation,
                    std::span<const double> b, int dim);

} // namespace topopt::krylov
