#include <benchmark/benchmark.h>

#include <random>

#include "topopt/fea.hpp"
#include "topopt/filter.hpp"
#include "topopt/krylov.hpp"
#include "topopt/problems.hpp"
#include "topopt/projection.hpp"
#include "topopt/solver.hpp"

namespace {

using namespace topopt;

// lshape at the given scale; 0.4 is 64x64.
solver::DesignProblem lshape(double scale) {
  return problems::make_design_problem(problems::find_benchmark("lshape")->scaled(scale));
}

Vector random_field(std::size_t n, double lo, double hi) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double scale_of(const benchmark::State& state) { return 0.1 * static_cast<double>(state.range(0)); }

void BM_ApplyStiffness(benchmark::State& state) {
  const auto p = lshape(scale_of(state));
  const auto a = random_field(p.grid.num_elements(), 1e-3, 1.0);
  const auto u = random_field(p.grid.num_dofs(), -1.0, 1.0);
  Vector out(u.size());
  for (auto _ : state) {
    fea::apply_stiffness(p.grid, a, u, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(p.grid.num_elements()));
}
BENCHMARK(BM_ApplyStiffness)->Arg(4)->Arg(8);

void BM_Filter(benchmark::State& state) {
  const auto p = lshape(scale_of(state));
  const auto v = random_field(p.grid.num_elements(), 0.1, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(filter::apply_filter(v, p.grid.nx(), p.grid.ny(), p.filter));
}
BENCHMARK(BM_Filter)->Arg(4)->Arg(8);

void BM_KrylovApply(benchmark::State& state) {
  const auto p = lshape(0.4);
  const auto a = random_field(p.grid.num_elements(), 1e-3, 1.0);
  auto b = random_field(p.grid.num_dofs(), -1.0, 1.0);
  for (std::size_t i = 0; i < b.size(); ++i)
    if (p.grid.is_fixed(i)) b[i] = 0.0;
  krylov::KrylovPreconditioner pre(static_cast<int>(state.range(0)));
  Vector out(b.size());
  for (auto _ : state) {
    pre.apply(p.grid, a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_KrylovApply)->Arg(5)->Arg(20);

void BM_ProjectSimplex(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto v = random_field(n, -0.5, 1.5);
  const projection::SimplexBounds bounds{0.1, 1.0, 0.4 * static_cast<double>(n)};
  for (auto _ : state) benchmark::DoNotOptimize(projection::project_simplex(v, bounds));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ProjectSimplex)->Arg(4096)->Arg(16384);

void BM_SolverStep(benchmark::State& state) {
  const auto p = lshape(scale_of(state));
  solver::SolverConfig config;
  config.record_wall_time = false;
  solver::BilevelSolver s(p, config);
  for (auto _ : state) s.step();
}
BENCHMARK(BM_SolverStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
