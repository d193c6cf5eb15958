#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "topopt/io.hpp"
#include "topopt/parallel.hpp"
#include "topopt/problems.hpp"
#include "topopt/solver.hpp"

namespace topopt::cli {

namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string problem_path;
  std::string config_path;
  std::string algo;
  std::optional<double> alpha0;
  std::optional<int> krylov_dim;
  std::optional<int> max_iters;
  std::optional<int> snapshot_every;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::optional<int> threads;
  double scale = 1.0;
  bool timing = false;
};

void add_run_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_path, "Solver config document (JSON)");
  cmd->add_option("--algo", o.algo, "cpfbto | fbto | pfbto | pgd")
      ->check(CLI::IsMember({"cpfbto", "fbto", "pfbto", "pgd", "cpfbto_krylov", "pfbto_jacobi",
                             "pgd_exact"}));
  cmd->add_option("--alpha0", o.alpha0, "Initial high-level step size");
  cmd->add_option("--krylov-dim", o.krylov_dim, "Krylov subspace dimension D");
  cmd->add_option("--max-iters", o.max_iters, "Iteration budget");
  cmd->add_option("--snapshot-every", o.snapshot_every, "Density snapshot period (0 = off)");
  cmd->add_option("--seed", o.seed, "Seed for randomized estimates");
  cmd->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--threads", o.threads, "Worker threads (fallback: TOPOPT_THREADS)");
  cmd->add_option("--scale", o.scale, "Resolution factor applied to the problem")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--timing", o.timing,
                "Record wall-clock time in elapsed_s (outputs are no longer byte-reproducible)");
}

solver::SolverConfig build_config(const RunOptions& o) {
  solver::SolverConfig c;
  if (!o.config_path.empty()) c = io::parse_config(io::read_file(o.config_path));
  if (!o.algo.empty()) c.algorithm = solver::parse_algorithm(o.algo);
  if (o.alpha0) c.alpha0 = *o.alpha0;
  if (o.krylov_dim) c.krylov_dim = *o.krylov_dim;
  if (o.max_iters) c.max_iters = *o.max_iters;
  if (o.snapshot_every) c.snapshot_every = *o.snapshot_every;
  if (o.seed) c.seed = *o.seed;
  // File outputs stay byte-reproducible unless timing is requested.
  c.record_wall_time = o.timing;
  return c;
}

void apply_threads(const RunOptions& o) {
  int n = 0;
  if (o.threads) {
    n = *o.threads;
  } else if (const char* env = std::getenv("TOPOPT_THREADS")) {
    n = std::atoi(env);
  }
  if (n > 0) set_num_threads(n);
}

std::string snapshot_name(int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "density_%06d.pgm", iter);
  return buf;
}

int execute(const problems::ProblemSpec& base, const RunOptions& o, std::ostream& out,
            std::ostream& err) {
  const auto spec = o.scale == 1.0 ? base : base.scaled(o.scale);
  const auto config = build_config(o);
  for (const auto& w : config.validate()) err << "warning: " << w << "\n";
  apply_threads(o);

  const auto problem = problems::make_design_problem(spec);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);

  const int nx = spec.nx, ny = spec.ny;
  auto observer = [&](const solver::SolverState& s) {
    io::write_snapshot(s.v_phys, nx, ny, dir / snapshot_name(s.iter));
  };
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = solver::run(problem, config, observer);
  const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - t0;

  io::write_snapshot(result.state.v_phys, nx, ny, dir / "final_density.pgm");
  io::write_convergence(result.record, dir / "convergence.csv");
  const auto summary = io::summarize(result, config);
  io::write_summary(summary, dir / "summary.json");
  out << spec.name << " " << nx << "x" << ny << " " << solver::to_string(config.algorithm)
      << ": " << summary.termination << " after " << summary.iterations
      << " iterations, compliance " << summary.compliance << ", residual_inf "
      << summary.residual_inf << ", " << wall.count() << " s\n";
  return result.reason == solver::Termination::converged ? exit_converged : exit_budget;
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bilevel first-order topology optimization"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Optimize a problem document");
  run_cmd->add_option("--problem", run_opts.problem_path, "Problem document (JSON)")->required();
  add_run_flags(run_cmd, run_opts);

  auto* bench = app.add_subcommand("bench", "Benchmark catalog");
  bench->require_subcommand(1);
  auto* bench_list = bench->add_subcommand("list", "List catalog entries");
  RunOptions bench_opts;
  std::string bench_name;
  auto* bench_run = bench->add_subcommand("run", "Optimize a catalog entry");
  bench_run->add_option("name", bench_name, "Catalog entry")->required();
  add_run_flags(bench_run, bench_opts);

  std::vector<const char*> argv{"topopt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_error;
  }

  try {
    if (*run_cmd) {
      const auto spec = io::parse_problem(io::read_file(run_opts.problem_path));
      return execute(spec, run_opts, out, err);
    }
    if (*bench_list) {
      for (const auto& p : problems::catalog())
        out << p.name << " " << p.ny << "x" << p.nx << " " << p.volume_fraction << "\n";
      return 0;
    }
    if (*bench_run) {
      const auto spec = problems::find_benchmark(bench_name);
      if (!spec) {
        err << "error: unknown benchmark '" << bench_name << "'\n";
        return exit_error;
      }
      return execute(*spec, bench_opts, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_error;
  }
  return exit_error;
}

} // namespace topopt::cli
