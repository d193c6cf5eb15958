#include "topopt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

namespace topopt::solver {

namespace {

constexpr double kExactTol = 1e-10;
constexpr int kPowerIters = 50;
constexpr int kBetaRefreshEvery = 100;

std::vector<std::size_t> design_indices(const DesignProblem& p) {
  std::vector<std::size_t> idx;
  for (std::size_t e = 0; e < p.grid.num_elements(); ++e)
    if (!p.is_passive(e)) idx.push_back(e);
  return idx;
}

// Projects the design entries of `trial` onto X; passive entries become v_lo.
Vector project_design(const DesignProblem& p, std::span<const double> trial) {
  const auto idx = design_indices(p);
  Vector sub(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) sub[i] = trial[idx[i]];
  const Vector proj = projection::project_simplex(sub, p.bounds());
  Vector out(trial.size(), p.v_lo);
  for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = proj[i];
  return out;
}

} // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::fbto: return "fbto";
    case Algorithm::pfbto_jacobi: return "pfbto_jacobi";
    case Algorithm::cpfbto_krylov: return "cpfbto_krylov";
    case Algorithm::pgd_exact: return "pgd_exact";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "fbto") return Algorithm::fbto;
  if (name == "pfbto" || name == "pfbto_jacobi") return Algorithm::pfbto_jacobi;
  if (name == "cpfbto" || name == "cpfbto_krylov") return Algorithm::cpfbto_krylov;
  if (name == "pgd" || name == "pgd_exact") return Algorithm::pgd_exact;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                              "' (expected fbto, pfbto, cpfbto or pgd)");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::budget: return "budget";
    case Termination::stopped: return "stopped";
  }
  return "?";
}

double SolverConfig::effective_alpha0() const {
  if (alpha0) return *alpha0;
  return (algorithm == Algorithm::fbto || algorithm == Algorithm::pfbto_jacobi) ? 0.001 : 0.25;
}

std::vector<std::string> SolverConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (alpha0 && !(*alpha0 > 0.0)) fail("alpha0 must be > 0");
  if (!(m >= 0.75 && m < 1.0)) fail("m must satisfy 3/4 <= m < 1");
  if (beta && !(*beta > 0.0)) fail("beta must be > 0");
  if (krylov_dim < 1) fail("krylov_dim must be >= 1");
  if (max_iters < 0) fail("max_iters must be >= 0");
  if (!(tol_dv > 0.0)) fail("tol_dv must be > 0");
  if (!(tol_res > 0.0)) fail("tol_res must be > 0");
  if (snapshot_every < 0) fail("snapshot_every must be >= 0");
  std::vector<std::string> warnings;
  if (m == 0.75)
    warnings.emplace_back("m = 3/4 lies on the boundary of the convergent step-size range (m > 3/4)");
  return warnings;
}

std::size_t DesignProblem::num_design() const {
  if (passive.empty()) return grid.num_elements();
  return static_cast<std::size_t>(std::count(passive.begin(), passive.end(), 0));
}

Vector physical_density(const DesignProblem& problem, std::span<const double> v) {
  Vector phys = filter::apply_filter(v, problem.grid.nx(), problem.grid.ny(), problem.filter);
  for (std::size_t e = 0; e < phys.size(); ++e)
    if (problem.is_passive(e)) phys[e] = problem.v_lo;
  return phys;
}

Vector activation(std::span<const double> v_phys, double eta) {
  Vector a(v_phys.size());
  for (std::size_t e = 0; e < a.size(); ++e) a[e] = std::pow(v_phys[e], eta);
  return a;
}

Vector sensitivity(const fea::GridModel& grid, std::span<const double> v_phys,
                   std::span<const double> u, double eta, const filter::FilterSpec& filter,
                   std::span<const std::uint8_t> passive) {
  const std::size_t ne = grid.num_elements();
  if (v_phys.size() != ne || u.size() != grid.num_dofs())
    throw std::invalid_argument("sensitivity: dimension mismatch");
  const auto& ke = grid.ke();
  Vector s(ne, 0.0);
  for (std::size_t e = 0; e < ne; ++e) {
    if (!passive.empty() && passive[e]) continue;
    const auto dofs = grid.element_dofs(e);
    double ue[8];
    for (int i = 0; i < 8; ++i) ue[i] = grid.is_fixed(dofs[i]) ? 0.0 : u[dofs[i]];
    double q = 0.0;
    for (int i = 0; i < 8; ++i) {
      double row = 0.0;
      for (int j = 0; j < 8; ++j) row += ke[8 * i + j] * ue[j];
      q += ue[i] * row;
    }
    s[e] = eta * std::pow(v_phys[e], eta - 1.0) * 0.5 * q;
  }
  Vector g = filter::apply_filter_adjoint(s, grid.nx(), grid.ny(), filter);
  if (!passive.empty())
    for (std::size_t e = 0; e < ne; ++e)
      if (passive[e]) g[e] = 0.0;
  return g;
}

Vector mean_project(std::span<const double> g, std::span<const std::uint8_t> passive) {
  Vector out(g.begin(), g.end());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!passive.empty() && passive[i]) continue;
    total += g[i];
    ++count;
  }
  if (count == 0) return out;
  const double mean = total / static_cast<double>(count);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!passive.empty() && passive[i])
      out[i] = 0.0;
    else
      out[i] -= mean;
  }
  return out;
}

double step_size(double alpha0, double m, int k) {
  if (k < 1) throw std::invalid_argument("step_size: k must be >= 1");
  return alpha0 * std::pow(static_cast<double>(k), -m);
}

double projection_error(const DesignProblem& problem, std::span<const double> v,
                        std::span<const double> ascent, double alpha) {
  Vector trial(v.begin(), v.end());
  axpy(alpha, ascent, trial);
  const Vector proj = project_design(problem, trial);
  double s = 0.0;
  for (std::size_t e = 0; e < v.size(); ++e) {
    if (problem.is_passive(e)) continue;
    const double d = proj[e] - v[e];
    s += d * d;
  }
  return s / (alpha * alpha);
}

NonFiniteState::NonFiniteState(int iter, const std::string& what)
    : std::runtime_error("non-finite state at iteration " + std::to_string(iter) + ": " + what +
                         " (alpha0 or beta too large?)"),
      iter_(iter) {}

BilevelSolver::BilevelSolver(DesignProblem problem, SolverConfig config,
                             std::span<const double> warm_start_v)
    : problem_(std::move(problem)), config_(config) {
  config_.validate();
  const std::size_t ne = problem_.grid.num_elements();
  if (!problem_.passive.empty() && problem_.passive.size() != ne)
    throw std::invalid_argument("passive mask length must equal the element count");
  if (!(problem_.eta >= 1.0)) throw std::invalid_argument("eta must be >= 1");
  problem_.filter.validate();
  problem_.bounds().validate(problem_.num_design());
  if (problem_.grid.num_fixed() < 3)
    throw std::invalid_argument("problem fixes fewer than 3 DOFs; K is singular");

  alpha0_ = config_.effective_alpha0();

  state_.u.assign(problem_.grid.num_dofs(), 0.0);
  if (!warm_start_v.empty()) {
    if (warm_start_v.size() != ne) throw std::invalid_argument("warm start length");
    state_.v = project_design(problem_, warm_start_v);
  } else {
    const double uniform = std::clamp(problem_.v_bar / static_cast<double>(problem_.num_design()),
                                      problem_.v_lo, 1.0);
    state_.v.assign(ne, uniform);
    for (std::size_t e = 0; e < ne; ++e)
      if (problem_.is_passive(e)) state_.v[e] = problem_.v_lo;
  }
  residual_.assign(problem_.grid.num_dofs(), 0.0);
  refresh();

  switch (config_.algorithm) {
    case Algorithm::cpfbto_krylov:
      krylov_.emplace(config_.krylov_dim);
      beta_ = config_.beta.value_or(1.0);
      break;
    case Algorithm::fbto:
      if (config_.beta) {
        beta_ = *config_.beta;
      } else {
        // K(1) dominates K(a) for every feasible a <= 1, so this bounds rho_max on X.
        const Vector full(ne, 1.0);
        beta_ = 1.0 / fea::estimate_rho_max(problem_.grid, full, kPowerIters, config_.seed).rho_max;
      }
      break;
    case Algorithm::pfbto_jacobi:
    case Algorithm::pgd_exact:
      beta_ = config_.beta.value_or(1.0);
      break;
  }
}

void BilevelSolver::set_alpha0(double alpha0) {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("alpha0 must be > 0");
  alpha0_ = alpha0;
  config_.alpha0 = alpha0;
}

void BilevelSolver::set_snapshot_every(int n) {
  if (n < 0) throw std::invalid_argument("snapshot_every must be >= 0");
  config_.snapshot_every = n;
}

void BilevelSolver::set_displacement(std::span<const double> u) {
  if (u.size() != state_.u.size()) throw std::invalid_argument("displacement length");
  for (std::size_t i = 0; i < u.size(); ++i)
    state_.u[i] = problem_.grid.is_fixed(i) ? 0.0 : u[i];
  refresh();
}

void BilevelSolver::refresh() {
  state_.v_phys = physical_density(problem_, state_.v);
  state_.activation = activation(state_.v_phys, problem_.eta);
  fea::residual(problem_.grid, state_.activation, state_.u, residual_);
  state_.residual_inf = norm_inf(residual_);
  // 1/2 u^T K u = 1/2 u^T (r + f)
  const auto f = problem_.grid.load();
  double e = 0.0;
  for (std::size_t i = 0; i < residual_.size(); ++i) e += state_.u[i] * (residual_[i] + f[i]);
  state_.compliance = 0.5 * e;
  double vol = 0.0;
  for (std::size_t i = 0; i < state_.v.size(); ++i)
    if (!problem_.is_passive(i)) vol += state_.v[i];
  state_.volume = vol;
}

Vector BilevelSolver::low_level_update() {
  const auto& grid = problem_.grid;
  const auto& a = state_.activation;
  Vector u = state_.u;
  switch (config_.algorithm) {
    case Algorithm::pgd_exact:
      return fea::exact_solve(grid, a, kExactTol, state_.u);
    case Algorithm::fbto:
      axpy(-beta_, residual_, u);
      return u;
    case Algorithm::pfbto_jacobi: {
      jacobi_inv_ = fea::stiffness_diagonal(grid, a);
      for (double& d : jacobi_inv_) d = d > 0.0 ? 1.0 / d : 0.0;
      if (!config_.beta && (beta_refreshed_at_ == 0 ||
                            state_.iter - beta_refreshed_at_ >= kBetaRefreshEvery)) {
        // Step for the squared system K M^-2 K.
        Vector tmp(grid.num_dofs());
        const double rho = fea::power_iteration(
            [&](std::span<const double> in, std::span<double> out) {
              fea::apply_stiffness(grid, a, in, tmp);
              for (std::size_t i = 0; i < tmp.size(); ++i)
                tmp[i] *= jacobi_inv_[i] * jacobi_inv_[i];
              fea::apply_stiffness(grid, a, tmp, out);
            },
            grid.num_dofs(), kPowerIters, config_.seed, grid.fixed_dofs());
        beta_ = 1.0 / rho;
        beta_refreshed_at_ = std::max(1, state_.iter);
      }
      Vector delta(residual_.size());
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] = jacobi_inv_[i] * jacobi_inv_[i] * residual_[i];
      const Vector w = fea::apply_stiffness(grid, a, delta);
      axpy(-beta_, w, u);
      return u;
    }
    case Algorithm::cpfbto_krylov: {
      Vector step(residual_.size());
      krylov_->apply(grid, a, residual_, step);
      axpy(-beta_, step, u);
      return u;
    }
  }
  return u;
}

Vector BilevelSolver::high_level_update(int k, std::span<const double> u) {
  Vector g = sensitivity(problem_.grid, state_.v_phys, u, problem_.eta, problem_.filter,
                         problem_.passive);
  if (config_.mean_projection) g = mean_project(g, problem_.passive);
  state_.gradient_sum = sum(g);
  state_.gradient_l1 = norm1(g);
  Vector trial = state_.v;
  axpy(step_size(alpha0_, config_.m, k), g, trial);
  return project_design(problem_, trial);
}

double BilevelSolver::projection_error(int k, bool exact) const {
  Vector u = state_.u;
  if (exact) u = fea::exact_solve(problem_.grid, state_.activation, kExactTol, state_.u);
  const Vector g = sensitivity(problem_.grid, state_.v_phys, u, problem_.eta, problem_.filter,
                               problem_.passive);
  return solver::projection_error(problem_, state_.v, g, step_size(alpha0_, config_.m, k));
}

void BilevelSolver::step() {
  const int k = state_.iter + 1;
  Vector u_next = low_level_update();
  if (!all_finite(u_next)) throw NonFiniteState(k, "displacement");
  const bool exact = config_.algorithm == Algorithm::pgd_exact;
  Vector v_next = high_level_update(k, exact ? std::span<const double>(u_next)
                                             : std::span<const double>(state_.u));
  if (!all_finite(v_next)) throw NonFiniteState(k, "densities");

  double dv = 0.0;
  for (std::size_t e = 0; e < v_next.size(); ++e)
    dv = std::max(dv, std::abs(v_next[e] - state_.v[e]));

  state_.u = std::move(u_next);
  state_.v = std::move(v_next);
  state_.iter = k;
  state_.last_dv_inf = dv;
  refresh();
  if (!std::isfinite(state_.residual_inf) || !std::isfinite(state_.compliance))
    throw NonFiniteState(k, "residual");
}

bool BilevelSolver::converged() const {
  // The first step starts from u = 0, so its sensitivity and dv vanish.
  return state_.iter >= 2 && state_.last_dv_inf < config_.tol_dv &&
         state_.residual_inf < config_.tol_res;
}

void RunControl::pause() {
  std::lock_guard lock(mu_);
  paused_ = true;
}

void RunControl::resume() {
  {
    std::lock_guard lock(mu_);
    paused_ = false;
  }
  cv_.notify_all();
}

void RunControl::stop() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
}

void RunControl::update_alpha0(double alpha0) {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("alpha0 must be > 0");
  std::lock_guard lock(mu_);
  alpha0_ = alpha0;
}

void RunControl::update_snapshot_every(int n) {
  if (n < 0) throw std::invalid_argument("snapshot_every must be >= 0");
  std::lock_guard lock(mu_);
  snapshot_every_ = n;
}

bool RunControl::paused() const {
  std::lock_guard lock(mu_);
  return paused_;
}

bool RunControl::stop_requested() const {
  std::lock_guard lock(mu_);
  return stop_;
}

bool RunControl::checkpoint(BilevelSolver& solver) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !paused_ || stop_; });
  if (alpha0_) solver.set_alpha0(*std::exchange(alpha0_, std::nullopt));
  if (snapshot_every_) solver.set_snapshot_every(*std::exchange(snapshot_every_, std::nullopt));
  return !stop_;
}

RunResult run(const DesignProblem& problem, const SolverConfig& config, const Observer& observer,
              RunControl* control, std::span<const double> warm_start_v) {
  BilevelSolver solver(problem, config, warm_start_v);
  RunResult result;
  result.reason = Termination::budget;
  const auto t0 = std::chrono::steady_clock::now();

  while (solver.state().iter < config.max_iters) {
    if (control && !control->checkpoint(solver)) {
      result.reason = Termination::stopped;
      break;
    }
    solver.step();
    const auto& s = solver.state();
    ConvergenceRow row;
    row.iter = s.iter;
    if (config.record_wall_time)
      row.elapsed_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.compliance = s.compliance;
    row.residual_inf = s.residual_inf;
    row.dv_inf = s.last_dv_inf;
    row.volume = s.volume;
    result.record.rows.push_back(row);

    const int every = solver.config().snapshot_every;
    if (observer && every > 0 && s.iter % every == 0) observer(s);
    if (solver.converged()) {
      result.reason = Termination::converged;
      break;
    }
  }
  result.state = solver.state();
  return result;
}

} // namespace topopt::solver
