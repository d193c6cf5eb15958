#include "topopt/fea.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace topopt::fea {

namespace {

void check_sizes(const GridModel& grid, std::span<const double> activation,
                 std::span<const double> u, std::span<const double> out) {
  if (activation.size() != grid.num_elements())
    throw std::invalid_argument("activation length " + std::to_string(activation.size()) +
                                " does not match element count " +
                                std::to_string(grid.num_elements()));
  if (u.size() != grid.num_dofs() || out.size() != grid.num_dofs())
    throw std::invalid_argument("displacement length does not match 2N = " +
                                std::to_string(grid.num_dofs()));
}

// Scratch for the element-local pass; reused across calls on the same thread.
std::vector<double>& element_scratch(std::size_t n) {
  thread_local std::vector<double> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

} // namespace

void Material::validate() const {
  if (!(young_modulus > 0.0) || !std::isfinite(young_modulus))
    throw std::invalid_argument("young_modulus must be > 0");
  if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5))
    throw std::invalid_argument("poisson_ratio must lie in [0, 0.5)");
}

ElementMatrix element_stiffness(const Material& material) {
  material.validate();
  const double nu = material.poisson_ratio;
  const double c = material.young_modulus / (1.0 - nu * nu);
  const double d[3][3] = {{c, c * nu, 0.0}, {c * nu, c, 0.0}, {0.0, 0.0, c * (1.0 - nu) / 2.0}};

  constexpr double xi_n[4] = {-1.0, 1.0, 1.0, -1.0};
  constexpr double eta_n[4] = {-1.0, -1.0, 1.0, 1.0};
  const double g = 1.0 / std::sqrt(3.0);

  ElementMatrix ke{};
  for (double xi : {-g, g}) {
    for (double eta : {-g, g}) {
      // Unit square: x = (1 + xi) / 2, so d/dx = 2 d/dxi and det J = 1/4.
      double b[3][8] = {};
      for (int i = 0; i < 4; ++i) {
        const double dndx = 2.0 * 0.25 * xi_n[i] * (1.0 + eta * eta_n[i]);
        const double dndy = 2.0 * 0.25 * eta_n[i] * (1.0 + xi * xi_n[i]);
        b[0][2 * i] = dndx;
        b[1][2 * i + 1] = dndy;
        b[2][2 * i] = dndy;
        b[2][2 * i + 1] = dndx;
      }
      double db[3][8] = {};
      for (int r = 0; r < 3; ++r)
        for (int j = 0; j < 8; ++j)
          for (int k = 0; k < 3; ++k) db[r][j] += d[r][k] * b[k][j];
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          double s = 0.0;
          for (int k = 0; k < 3; ++k) s += b[k][i] * db[k][j];
          ke[i * 8 + j] += 0.25 * s;
        }
    }
  }
  // Quadrature is exactly symmetric up to rounding; make it bitwise so.
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j) {
      const double s = 0.5 * (ke[i * 8 + j] + ke[j * 8 + i]);
      ke[i * 8 + j] = ke[j * 8 + i] = s;
    }
  return ke;
}

GridModel::GridModel(int nx, int ny, const Material& material,
                     std::vector<std::uint8_t> fixed_dofs, Vector load)
    : nx_(nx), ny_(ny), material_(material), ke_(element_stiffness(material)),
      fixed_(std::move(fixed_dofs)), load_(std::move(load)) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("grid needs nx, ny >= 1");
  if (fixed_.size() != num_dofs())
    throw std::invalid_argument("fixed-DOF mask length must be 2N");
  if (load_.size() != num_dofs()) throw std::invalid_argument("load length must be 2N");
  for (std::size_t i = 0; i < load_.size(); ++i)
    if (fixed_[i]) load_[i] = 0.0;
}

std::size_t GridModel::num_fixed() const {
  return static_cast<std::size_t>(std::count_if(fixed_.begin(), fixed_.end(),
                                                [](std::uint8_t f) { return f != 0; }));
}

std::array<std::size_t, 8> GridModel::element_dofs(std::size_t e) const {
  const std::size_t stride = static_cast<std::size_t>(nx_) + 1;
  const std::size_t col = e % static_cast<std::size_t>(nx_);
  const std::size_t row = e / static_cast<std::size_t>(nx_);
  const std::size_t bl = (row + 1) * stride + col;
  const std::size_t br = bl + 1;
  const std::size_t tl = row * stride + col;
  const std::size_t tr = tl + 1;
  return {2 * bl, 2 * bl + 1, 2 * br, 2 * br + 1, 2 * tr, 2 * tr + 1, 2 * tl, 2 * tl + 1};
}

void apply_stiffness(const GridModel& grid, std::span<const double> activation,
                     std::span<const double> u, std::span<double> out) {
  check_sizes(grid, activation, u, out);
  const auto& ke = grid.ke();
  const auto fixed = grid.fixed_dofs();
  const std::ptrdiff_t n_elem = static_cast<std::ptrdiff_t>(grid.num_elements());
  auto& local = element_scratch(8 * grid.num_elements());

  // Pass 1: y_e = a_e * ke * u_e, one independent block per element.
#pragma omp parallel for schedule(static) if (n_elem > 4096)
  for (std::ptrdiff_t e = 0; e < n_elem; ++e) {
    const auto dofs = grid.element_dofs(static_cast<std::size_t>(e));
    double ue[8];
    for (int i = 0; i < 8; ++i) ue[i] = fixed[dofs[i]] ? 0.0 : u[dofs[i]];
    const double a = activation[static_cast<std::size_t>(e)];
    double* y = local.data() + 8 * e;
    for (int i = 0; i < 8; ++i) {
      const double* row = ke.data() + 8 * i;
      double s = 0.0;
      for (int j = 0; j < 8; ++j) s += row[j] * ue[j];
      y[i] = a * s;
    }
  }

  // Pass 2: each node gathers from its incident elements in a fixed order.
  const int nx = grid.nx();
  const int ny = grid.ny();
  const std::ptrdiff_t n_rows = ny + 1;
#pragma omp parallel for schedule(static) if (n_elem > 4096)
  for (std::ptrdiff_t r = 0; r < n_rows; ++r) {
    for (int i = 0; i <= nx; ++i) {
      double sx = 0.0;
      double sy = 0.0;
      auto add = [&](int col, std::ptrdiff_t row, int local_node) {
        const double* y = local.data() + 8 * (row * nx + col) + 2 * local_node;
        sx += y[0];
        sy += y[1];
      };
      if (r >= 1 && i < nx) add(i, r - 1, 0);       // bottom-left of the element above
      if (r >= 1 && i >= 1) add(i - 1, r - 1, 1);   // bottom-right
      if (r < ny && i >= 1) add(i - 1, r, 2);       // top-right of the element below
      if (r < ny && i < nx) add(i, r, 3);           // top-left
      const std::size_t node = static_cast<std::size_t>(r) * (nx + 1) + i;
      out[2 * node] = fixed[2 * node] ? 0.0 : sx;
      out[2 * node + 1] = fixed[2 * node + 1] ? 0.0 : sy;
    }
  }
}

Vector apply_stiffness(const GridModel& grid, std::span<const double> activation,
                       std::span<const double> u) {
  Vector out(grid.num_dofs());
  apply_stiffness(grid, activation, u, out);
  return out;
}

double compliance_energy(const GridModel& grid, std::span<const double> activation,
                         std::span<const double> u) {
  const Vector ku = apply_stiffness(grid, activation, u);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!grid.is_fixed(i)) s += u[i] * ku[i];
  return 0.5 * s;
}

Vector stiffness_diagonal(const GridModel& grid, std::span<const double> activation) {
  if (activation.size() != grid.num_elements())
    throw std::invalid_argument("activation length does not match element count");
  Vector diag(grid.num_dofs(), 0.0);
  const auto& ke = grid.ke();
  for (std::size_t e = 0; e < grid.num_elements(); ++e) {
    const auto dofs = grid.element_dofs(e);
    for (int i = 0; i < 8; ++i) diag[dofs[i]] += activation[e] * ke[9 * i];
  }
  for (std::size_t i = 0; i < diag.size(); ++i)
    if (grid.is_fixed(i)) diag[i] = 0.0;
  return diag;
}

void residual(const GridModel& grid, std::span<const double> activation,
              std::span<const double> u, std::span<double> r) {
  apply_stiffness(grid, activation, u, r);
  const auto f = grid.load();
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= f[i];
}

Vector exact_solve(const GridModel& grid, std::span<const double> activation, double tol,
                   std::span<const double> initial, SolveStats* stats) {
  if (!(tol > 0.0)) throw std::invalid_argument("exact_solve: tol must be > 0");
  if (grid.num_fixed() < 3)
    throw SolverFailure("exact_solve: fewer than 3 fixed DOFs, K is singular");
  const std::size_t n = grid.num_dofs();
  const auto f = grid.load();

  Vector x(n, 0.0);
  if (!initial.empty()) {
    if (initial.size() != n) throw std::invalid_argument("exact_solve: warm start length");
    for (std::size_t i = 0; i < n; ++i) x[i] = grid.is_fixed(i) ? 0.0 : initial[i];
  }

  Vector inv_diag = stiffness_diagonal(grid, activation);
  for (double& d : inv_diag) d = d > 0.0 ? 1.0 / d : 0.0;

  const int cap = static_cast<int>(50 * n);
  int iters = 0;
  Vector r(n), z(n), p(n), q(n);

  // Outer loop restarts from the true residual whenever the recurrence
  // claims convergence but the recomputed residual disagrees.
  for (;;) {
    residual(grid, activation, x, r);
    for (double& v : r) v = -v;
    double r_inf = norm_inf(r);
    if (r_inf <= tol) {
      if (stats) *stats = {iters, r_inf};
      return x;
    }
    if (iters >= cap) break;

    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = dot(r, z);
    bool restart = false;
    while (iters < cap) {
      apply_stiffness(grid, activation, p, q);
      const double pq = dot(p, q);
      if (!(pq > 0.0)) break;
      const double alpha = rz / pq;
      axpy(alpha, p, x);
      axpy(-alpha, q, r);
      ++iters;
      if (norm_inf(r) <= 0.5 * tol) {
        restart = true;
        break;
      }
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
      const double rz_next = dot(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    if (!restart && iters < cap) break;  // breakdown
  }
  residual(grid, activation, x, r);
  throw SolverFailure("exact_solve: no convergence after " + std::to_string(iters) +
                      " CG iterations (residual_inf " + std::to_string(norm_inf(r)) + ")");
}

double power_iteration(const std::function<void(std::span<const double>, std::span<double>)>& op,
                       std::size_t n, int iters, std::uint64_t seed,
                       std::span<const std::uint8_t> exclude) {
  std::mt19937_64 gen(seed);
  Vector x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    x[i] = (!exclude.empty() && exclude[i]) ? 0.0 : r - 0.5;
  }
  double nx = norm2(x);
  if (nx == 0.0) return 0.0;
  for (double& v : x) v /= nx;

  double rq = 0.0;
  for (int it = 0; it < iters; ++it) {
    op(x, y);
    rq = dot(x, y);
    const double ny = norm2(y);
    if (ny == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / ny;
  }
  return rq;
}

SpectrumEstimate estimate_rho_max(const GridModel& grid, std::span<const double> activation,
                                  int iters, std::uint64_t seed) {
  if (iters < 5) throw std::invalid_argument("estimate_rho_max: iters must be >= 5");
  const double rho = power_iteration(
      [&](std::span<const double> in, std::span<double> out) {
        apply_stiffness(grid, activation, in, out);
      },
      grid.num_dofs(), iters, seed, grid.fixed_dofs());
  return {rho, std::nullopt};
}

} // namespace topopt::fea
