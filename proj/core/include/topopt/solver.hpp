#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "topopt/fea.hpp"
#include "topopt/filter.hpp"
#include "topopt/krylov.hpp"
#include "topopt/linalg.hpp"
#include "topopt/projection.hpp"

namespace topopt::solver {

enum class Algorithm { fbto, pfbto_jacobi, cpfbto_krylov, pgd_exact };

std::string_view to_string(Algorithm a);
/// Accepts the canonical names and the short CLI aliases
/// (fbto, pfbto, cpfbto, pgd). Throws std::invalid_argument otherwise.
Algorithm parse_algorithm(std::string_view name);

struct SolverConfig {
  Algorithm algorithm = Algorithm::cpfbto_krylov;
  std::optional<double> alpha0;  ///< unset: 0.25, or 0.001 for fbto / pfbto
  double m = 0.75;               ///< alpha_k = alpha0 * k^-m
  std::optional<double> beta;    ///< unset: 1 for cpfbto, 1/rho_max estimate otherwise
  int krylov_dim = 20;
  int max_iters = 50000;
  double tol_dv = 1e-4;
  double tol_res = 1e-2;
  int snapshot_every = 100;  ///< 0 disables observer snapshots
  std::uint64_t seed = 0;
  bool mean_projection = true;
  bool record_wall_time = true;

  double effective_alpha0() const;

  /// Throws std::invalid_argument on a violated invariant. Returns
  /// non-fatal warnings (m == 3/4 sits on the boundary of the step-size
  /// assumption).
  std::vector<std::string> validate() const;

  bool operator==(const SolverConfig&) const = default;
};

/// A resolved optimization problem: FE grid plus the design-space data.
struct DesignProblem {
  fea::GridModel grid;
  filter::FilterSpec filter;
  double eta = 3.0;
  double v_lo = 0.1;
  double v_bar = 0.0;                 ///< budget over the non-passive elements
  std::vector<std::uint8_t> passive;  ///< 1 = void element pinned to v_lo

  std::size_t num_design() const;
  bool is_passive(std::size_t e) const { return !passive.empty() && passive[e] != 0; }
  projection::SimplexBounds bounds() const { return {v_lo, 1.0, v_bar}; }
};

/// C(v), with passive elements forced back to v_lo.
Vector physical_density(const DesignProblem& problem, std::span<const double> v);

/// a_e = v_phys_e^eta.
Vector activation(std::span<const double> v_phys, double eta);

/// Ascent direction g = C^T s with s_e = eta v_phys_e^(eta-1) * 1/2 u_e^T ke u_e,
/// i.e. g = -dl/dv at fixed u. Entries of passive elements are zero (and
/// passive elements contribute nothing to s).
Vector sensitivity(const fea::GridModel& grid, std::span<const double> v_phys,
                   std::span<const double> u, double eta, const filter::FilterSpec& filter,
                   std::span<const std::uint8_t> passive = {});

/// g - mean(g). With a passive mask the mean is taken over the remaining
/// entries and passive entries are left at zero.
Vector mean_project(std::span<const double> g, std::span<const std::uint8_t> passive = {});

/// alpha0 * k^-m.
double step_size(double alpha0, double m, int k);

/// (1/alpha^2) ||Proj(v + alpha g) - v||^2 over the design entries.
double projection_error(const DesignProblem& problem, std::span<const double> v,
                        std::span<const double> ascent, double alpha);

struct SolverState {
  int iter = 0;
  Vector u;
  Vector v;
  Vector v_phys;
  Vector activation;
  double residual_inf = 0.0;  ///< ||K(v) u - f||_inf
  double compliance = 0.0;    ///< 1/2 u^T K(v) u
  double volume = 0.0;        ///< sum of v over design elements
  double last_dv_inf = 0.0;   ///< ||v_k - v_{k-1}||_inf
  double gradient_sum = 0.0;  ///< sum of the last (mean-projected) ascent direction
  double gradient_l1 = 0.0;   ///< its l1 norm
};

struct ConvergenceRow {
  int iter = 0;
  double elapsed_s = 0.0;
  double compliance = 0.0;
  double residual_inf = 0.0;
  double dv_inf = 0.0;
  double volume = 0.0;
};

struct ConvergenceRecord {
  std::vector<ConvergenceRow> rows;
};

enum class Termination { converged, budget, stopped };
std::string_view to_string(Termination t);

/// Raised when an iterate stops being finite (typically a too-large alpha0).
class NonFiniteState : public std::runtime_error {
 public:
  NonFiniteState(int iter, const std::string& what);
  int iter() const { return iter_; }

 private:
  int iter_;
};

/// One bilevel optimization in progress. step() advances (u_k, v_k) by one
/// iteration of the configured algorithm; the building blocks are exposed
/// for tests and diagnostics.
class BilevelSolver {
 public:
  BilevelSolver(DesignProblem problem, SolverConfig config,
                std::span<const double> warm_start_v = {});

  const DesignProblem& problem() const { return problem_; }
  const SolverConfig& config() const { return config_; }
  const SolverState& state() const { return state_; }
  double beta() const { return beta_; }
  double alpha0() const { return alpha0_; }

  void set_alpha0(double alpha0);
  void set_snapshot_every(int n);

  /// Replaces u (fixed DOFs forced to zero) and refreshes the cached
  /// residual. For tests that drive the low level at fixed v.
  void set_displacement(std::span<const double> u);

  /// Current low-level residual K(v_k) u_k - f.
  std::span<const double> residual() const { return residual_; }

  /// u_{k+1} from (u_k, v_k) for the configured algorithm; pgd solves exactly.
  Vector low_level_update();

  /// v_{k+1} = Proj(v_k + alpha_k g) with g from u (mean-projected when enabled).
  Vector high_level_update(int k, std::span<const double> u);

  /// Projection error at v_k with the approximate ascent direction, or with
  /// the exact one (u from an exact solve) when `exact` is set.
  double projection_error(int k, bool exact) const;

  /// One iteration; throws NonFiniteState if the new iterate is not finite.
  void step();

  bool converged() const;

 private:
  void refresh();

  DesignProblem problem_;
  SolverConfig config_;
  SolverState state_;
  Vector residual_;
  double alpha0_ = 0.0;
  double beta_ = 1.0;
  Vector jacobi_inv_;
  int beta_refreshed_at_ = 0;
  std::optional<krylov::KrylovPreconditioner> krylov_;
};

/// Pause/resume/stop and live parameter updates, applied by the solver only
/// at iteration boundaries. Thread-safe.
class RunControl {
 public:
  void pause();
  void resume();
  void stop();
  void update_alpha0(double alpha0);
  void update_snapshot_every(int n);

  bool paused() const;
  bool stop_requested() const;

  /// Solver side: applies pending updates, blocks while paused. Returns
  /// false once a stop was requested.
  bool checkpoint(BilevelSolver& solver);

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool paused_ = false;
  bool stop_ = false;
  std::optional<double> alpha0_;
  std::optional<int> snapshot_every_;
};

struct RunResult {
  SolverState state;
  ConvergenceRecord record;
  Termination reason = Termination::budget;
};

using Observer = std::function<void(const SolverState&)>;

/// Iterates until ||v_{k+1} - v_k||_inf < tol_dv and ||K u - f||_inf < tol_res
/// ("converged") or max_iters ("budget"). The observer sees the state after
/// every snapshot_every-th iteration.
RunResult run(const DesignProblem& problem, const SolverConfig& config,
              const Observer& observer = {}, RunControl* control = nullptr,
              std::span<const double> warm_start_v = {});

} // namespace topopt::solver
