#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "topopt/io.hpp"

using topopt::Vector;
namespace io = topopt::io;
namespace solver = topopt::solver;
namespace fs = std::filesystem;

namespace {

const char* kMinimalCantilever = R"({
  "name": "cantilever",
  "nx": 32, "ny": 16, "volume_fraction": 0.4,
  "fixtures": [{"select": {"box": [0, 0, 0, 1]}, "dofs": "xy"}],
  "loads": [{"select": {"point": [1, 0.5]}, "fx": 0, "fy": -1}]
})";

std::string expect_parse_error(const std::string& doc) {
  try {
    io::parse_problem(doc);
  } catch (const io::ParseError& e) {
    return e.what();
  }
  ADD_FAILURE() << "accepted: " << doc;
  return {};
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("topopt_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

} // namespace

TEST(ProblemDocument, MinimalCantilever) {
  const auto p = io::parse_problem(kMinimalCantilever);
  EXPECT_EQ(p, oracle::small_cantilever(32, 16, 0.4));
}

TEST(ProblemDocument, DefaultsFilled) {
  const auto p = io::parse_problem(kMinimalCantilever);
  EXPECT_DOUBLE_EQ(p.eta, 3.0);
  EXPECT_DOUBLE_EQ(p.v_lo, 0.1);
  EXPECT_EQ(p.filter.size, 7);
  EXPECT_DOUBLE_EQ(p.filter.sigma, 1.5);
  EXPECT_DOUBLE_EQ(p.material.poisson_ratio, 0.3);
  EXPECT_TRUE(p.passive.empty());
}

TEST(ProblemDocument, RoundTrip) {
  const auto p = io::parse_problem(kMinimalCantilever);
  EXPECT_EQ(io::parse_problem(io::serialize_problem(p)), p);
}

TEST(ProblemDocument, CatalogRoundTrips) {
  for (const auto& p : topopt::problems::catalog()) {
    const auto text = io::serialize_problem(p);
    EXPECT_EQ(io::parse_problem(text), p) << p.name;
    EXPECT_EQ(io::serialize_problem(io::parse_problem(text)), text) << p.name;
  }
}

TEST(ProblemDocument, AllSelectorKindsRoundTrip) {
  auto p = oracle::small_cantilever(10, 8);
  using S = topopt::problems::NodeSelector;
  p.fixtures.push_back({S::node(3, 2), topopt::problems::DofMask::x});
  p.fixtures.push_back({S::node_box(0, 0, 10, 0), topopt::problems::DofMask::y});
  p.passive = {{0.2, 0.3, 0.6, 0.9}};
  p.eta = 2.5;
  p.filter = {5, 0.75};
  p.material = {2.0, 0.25};
  p.v_lo = 0.05;
  EXPECT_EQ(io::parse_problem(io::serialize_problem(p)), p);
}

TEST(ProblemDocument, InfeasibleFractionRejected) {
  auto doc = nlohmann::json::parse(kMinimalCantilever);
  doc["volume_fraction"] = 0.05;
  const auto msg = expect_parse_error(doc.dump());
  EXPECT_NE(msg.find("volume_fraction"), std::string::npos) << msg;
}

TEST(ProblemDocument, UnknownKeysRejected) {
  auto doc = nlohmann::json::parse(kMinimalCantilever);
  doc["alpha_0"] = 0.3;
  EXPECT_NE(expect_parse_error(doc.dump()).find("alpha_0"), std::string::npos);

  doc = nlohmann::json::parse(kMinimalCantilever);
  doc["filter"] = {{"size", 7}, {"sigm", 1.5}};
  EXPECT_NE(expect_parse_error(doc.dump()).find("sigm"), std::string::npos);

  doc = nlohmann::json::parse(kMinimalCantilever);
  doc["loads"][0]["fz"] = 1.0;
  EXPECT_NE(expect_parse_error(doc.dump()).find("fz"), std::string::npos);
}

TEST(ProblemDocument, MalformedRejected) {
  expect_parse_error("{");
  expect_parse_error("[]");
  expect_parse_error(R"({"name": "x", "nx": 4})");
  auto doc = nlohmann::json::parse(kMinimalCantilever);
  doc["nx"] = 3.5;
  expect_parse_error(doc.dump());
  doc = nlohmann::json::parse(kMinimalCantilever);
  doc["fixtures"][0]["dofs"] = "z";
  expect_parse_error(doc.dump());
  doc = nlohmann::json::parse(kMinimalCantilever);
  doc["fixtures"][0]["select"] = {{"point", {2.0, 0.0}}};
  expect_parse_error(doc.dump());
}

TEST(ConfigDocument, DefaultsAndRoundTrip) {
  const auto c = io::parse_config("{}");
  EXPECT_EQ(c, solver::SolverConfig{});
  solver::SolverConfig d;
  d.algorithm = solver::Algorithm::pfbto_jacobi;
  d.alpha0 = 0.002;
  d.beta = 0.5;
  d.m = 0.8;
  d.krylov_dim = 7;
  d.max_iters = 123;
  d.seed = 99;
  d.mean_projection = false;
  d.record_wall_time = false;
  EXPECT_EQ(io::parse_config(io::serialize_config(d)), d);
}

TEST(ConfigDocument, Rejections) {
  EXPECT_THROW(io::parse_config(R"({"alpha": 0.1})"), io::ParseError);
  EXPECT_THROW(io::parse_config(R"({"algorithm": "sqp"})"), io::ParseError);
  EXPECT_THROW(io::parse_config(R"({"m": 0.5})"), io::ParseError);
  EXPECT_THROW(io::parse_config(R"({"krylov_dim": 0})"), io::ParseError);
  EXPECT_THROW(io::parse_config(R"({"max_iters": "ten"})"), io::ParseError);
  EXPECT_EQ(io::parse_config(R"({"algorithm": "pgd"})").algorithm, solver::Algorithm::pgd_exact);
}

TEST(Pgm, SolidIsBlack) {
  const auto pgm = io::encode_pgm(Vector(6, 1.0), 3, 2);
  EXPECT_EQ(pgm, std::string("P5\n3 2\n255\n") + std::string(6, '\0'));
}

TEST(Pgm, HalfRoundsUp) {
  const auto pgm = io::encode_pgm(Vector(4, 0.5), 2, 2);
  const auto header = std::string("P5\n2 2\n255\n");
  ASSERT_EQ(pgm.size(), header.size() + 4);
  for (std::size_t i = header.size(); i < pgm.size(); ++i)
    EXPECT_EQ(static_cast<unsigned char>(pgm[i]), 128);
}

TEST(Pgm, CheckerPattern) {
  const auto pgm = io::encode_pgm(Vector{1.0, 0.0, 0.0, 1.0}, 2, 2);
  EXPECT_EQ(pgm.substr(pgm.size() - 4), std::string("\x00\xff\xff\x00", 4));
}

TEST(Pgm, SizeMismatch) { EXPECT_THROW(io::encode_pgm(Vector(3, 1.0), 2, 2), std::invalid_argument); }

TEST(Pgm, WrittenFileMatchesEncoding) {
  const auto dir = temp_dir("pgm");
  const Vector v{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  io::write_snapshot(v, 3, 2, dir / "a.pgm");
  EXPECT_EQ(io::read_file(dir / "a.pgm"), io::encode_pgm(v, 3, 2));
}

TEST(Convergence, EmptyRecordIsHeaderOnly) {
  EXPECT_EQ(io::encode_convergence({}), "iter,elapsed_s,compliance,residual_inf,dv_inf,volume\n");
}

TEST(Convergence, RowsRoundTripAtFullPrecision) {
  solver::ConvergenceRecord rec;
  const auto vals = oracle::random_vector(5 * 40, 1e-9, 1e3, 12);
  for (int i = 0; i < 40; ++i) {
    const auto* x = &vals[static_cast<std::size_t>(5 * i)];
    rec.rows.push_back({i + 1, x[0], x[1], x[2], x[3], x[4]});
  }
  const auto csv = io::encode_convergence(rec);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 41);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  const auto back = io::parse_convergence(csv);
  ASSERT_EQ(back.rows.size(), 40u);
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(back.rows[i].iter, rec.rows[i].iter);
    EXPECT_EQ(back.rows[i].compliance, rec.rows[i].compliance);
    EXPECT_EQ(back.rows[i].volume, rec.rows[i].volume);
    EXPECT_EQ(back.rows[i].dv_inf, rec.rows[i].dv_inf);
  }
}

TEST(Convergence, BadHeaderRejected) {
  EXPECT_THROW(io::parse_convergence("iter;compliance\n"), io::ParseError);
}

TEST(Summary, MatchesLastRow) {
  const auto p = topopt::problems::make_design_problem(oracle::small_cantilever(6, 4));
  solver::SolverConfig c;
  c.max_iters = 25;
  c.record_wall_time = false;
  const auto r = solver::run(p, c);
  const auto s = io::summarize(r, c);
  const auto& last = r.record.rows.back();
  EXPECT_EQ(s.termination, "budget");
  EXPECT_EQ(s.iterations, last.iter);
  EXPECT_EQ(s.compliance, last.compliance);
  EXPECT_EQ(s.residual_inf, last.residual_inf);
  EXPECT_EQ(s.volume, last.volume);

  const auto doc = nlohmann::json::parse(io::summary_json(s));
  EXPECT_EQ(doc["iterations"], 25);
  EXPECT_EQ(doc["compliance"].get<double>(), last.compliance);
  EXPECT_EQ(doc["config"]["max_iters"], 25);
}

TEST(Summary, ZeroIterations) {
  const auto p = topopt::problems::make_design_problem(oracle::small_cantilever(6, 4));
  solver::SolverConfig c;
  c.max_iters = 0;
  const auto s = io::summarize(solver::run(p, c), c);
  EXPECT_EQ(s.iterations, 0);
  EXPECT_EQ(s.termination, "budget");
  EXPECT_EQ(s.compliance, 0.0);
}

TEST(ReadFile, MissingFileThrows) {
  EXPECT_THROW(io::read_file("/nonexistent/topopt/file.json"), std::runtime_error);
}
