#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "topopt/linalg.hpp"

/// Regular-grid 2D linear elasticity with bilinear quads.
///
/// Storage conventions: elements and nodes are stored row-major in image
/// order, row 0 at the top. Element (col, row) has index row * nx + col.
/// Node (i, row) has index row * (nx + 1) + i and owns displacement DOFs
/// 2 * node (x) and 2 * node + 1 (y). Displacements and forces are expressed
/// in physical axes: +x to the right, +y upward.
namespace topopt::fea {

/// Thrown when an iterative solve cannot meet its tolerance.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Material {
  double young_modulus = 1.0;
  double poisson_ratio = 0.3;

  /// Throws std::invalid_argument when E <= 0 or nu is outside [0, 0.5).
  void validate() const;
  bool operator==(const Material&) const = default;
};

/// Row-major 8x8 element matrix. Local node order is bottom-left,
/// bottom-right, top-right, top-left; local DOFs are (x, y) per node.
using ElementMatrix = std::array<double, 64>;

/// Plane-stress stiffness of a unit-square bilinear quad, integrated with
/// 2x2 Gauss quadrature.
ElementMatrix element_stiffness(const Material& material);

class GridModel {
 public:
  GridModel(int nx, int ny, const Material& material, std::vector<std::uint8_t> fixed_dofs,
            Vector load);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t num_elements() const { return static_cast<std::size_t>(nx_) * ny_; }
  std::size_t num_nodes() const { return static_cast<std::size_t>(nx_ + 1) * (ny_ + 1); }
  std::size_t num_dofs() const { return 2 * num_nodes(); }

  const Material& material() const { return material_; }
  const ElementMatrix& ke() const { return ke_; }
  std::span<const std::uint8_t> fixed_dofs() const { return fixed_; }
  bool is_fixed(std::size_t dof) const { return fixed_[dof] != 0; }
  std::size_t num_fixed() const;
  std::span<const double> load() const { return load_; }

  /// Global DOF indices of an element in local order.
  std::array<std::size_t, 8> element_dofs(std::size_t e) const;

 private:
  int nx_;
  int ny_;
  Material material_;
  ElementMatrix ke_;
  std::vector<std::uint8_t> fixed_;
  Vector load_;
};

/// out = K(a) u, K(a) = sum_e a_e K_e. Fixed DOFs are eliminated by masking:
/// their entries of u are ignored and their entries of out are zero.
///
/// Evaluated in two conflict-free passes (element-local products, then a
/// per-node gather over the <= 4 incident elements) so the result does not
/// depend on the number of threads.
void apply_stiffness(const GridModel& grid, std::span<const double> activation,
                     std::span<const double> u, std::span<double> out);
Vector apply_stiffness(const GridModel& grid, std::span<const double> activation,
                       std::span<const double> u);

/// 1/2 u^T K(a) u.
double compliance_energy(const GridModel& grid, std::span<const double> activation,
                         std::span<const double> u);

/// diag(K(a)); zero on fixed DOFs.
Vector stiffness_diagonal(const GridModel& grid, std::span<const double> activation);

/// r = K(a) u - f on free DOFs (zero on fixed DOFs).
void residual(const GridModel& grid, std::span<const double> activation,
              std::span<const double> u, std::span<double> r);

struct SolveStats {
  int iterations = 0;
  double residual_inf = 0.0;
};

/// Solves K(a) u = f to ||K u - f||_inf <= tol with Jacobi-preconditioned
/// conjugate gradients, capped at 50 * (2N) iterations. `initial` may carry
/// a warm start. Throws SolverFailure on non-convergence or when fewer than
/// three DOFs are fixed.
Vector exact_solve(const GridModel& grid, std::span<const double> activation, double tol,
                   std::span<const double> initial = {}, SolveStats* stats = nullptr);

struct SpectrumEstimate {
  double rho_max = 0.0;
  std::optional<double> rho_min_hint;
};

/// Power iteration for the dominant eigenvalue of a symmetric positive
/// semidefinite operator. Returns the Rayleigh quotient of the final iterate.
/// The start vector is drawn from a fixed-seed generator; entries flagged in
/// `exclude` start at zero.
double power_iteration(const std::function<void(std::span<const double>, std::span<double>)>& op,
                       std::size_t n, int iters, std::uint64_t seed,
                       std::span<const std::uint8_t> exclude = {});

/// Largest eigenvalue of the masked K(a). Requires iters >= 5.
SpectrumEstimate estimate_rho_max(const GridModel& grid, std::span<const double> activation,
                                  int iters, std::uint64_t seed = 0x5eed);

} // namespace topopt::fea
