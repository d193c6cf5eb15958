#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "topopt/problems.hpp"
#include "topopt/solver.hpp"

/// Problem/config documents (JSON, strict keys) and run outputs.
namespace topopt::io {

/// Malformed document or violated invariant; the message names the key.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

problems::ProblemSpec parse_problem(std::string_view text);
std::string serialize_problem(const problems::ProblemSpec& spec);

solver::SolverConfig parse_config(std::string_view text);
std::string serialize_config(const solver::SolverConfig& config);

std::string read_file(const std::filesystem::path& path);

/// Binary PGM (P5), pixel = round(255 * (1 - v)), so solid renders black.
std::string encode_pgm(std::span<const double> v_phys, int nx, int ny);
void write_snapshot(std::span<const double> v_phys, int nx, int ny,
                    const std::filesystem::path& path);

/// CSV `iter,elapsed_s,compliance,residual_inf,dv_inf,volume`, 17 significant
/// digits, LF line endings.
std::string encode_convergence(const solver::ConvergenceRecord& record);
void write_convergence(const solver::ConvergenceRecord& record,
                       const std::filesystem::path& path);
solver::ConvergenceRecord parse_convergence(std::string_view csv);

struct RunSummary {
  std::string termination;
  int iterations = 0;
  double elapsed_s = 0.0;
  double compliance = 0.0;
  double volume = 0.0;
  double residual_inf = 0.0;
  solver::SolverConfig config;
};

/// Figures are taken from the last convergence row (the initial state when
/// no iteration ran).
RunSummary summarize(const solver::RunResult& result, const solver::SolverConfig& config);
std::string summary_json(const RunSummary& summary);
void write_summary(const RunSummary& summary, const std::filesystem::path& path);

} // namespace topopt::io
