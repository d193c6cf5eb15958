#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "oracles.hpp"
#include "topopt/io.hpp"

namespace fs = std::filesystem;
namespace io = topopt::io;
using topopt::cli::cli_main;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("topopt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    problem_ = dir_ / "problem.json";
    std::ofstream(problem_) << io::serialize_problem(oracle::small_cantilever(16, 8, 0.4));
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  fs::path problem_;
};

} // namespace

TEST_F(CliTest, BenchListPrintsCatalog) {
  const auto r = invoke({"bench", "list"});
  EXPECT_EQ(r.code, 0);
  std::istringstream lines(r.out);
  std::vector<std::string> names;
  for (std::string line; std::getline(lines, line);) names.push_back(line.substr(0, line.find(' ')));
  EXPECT_EQ(names, (std::vector<std::string>{"teaser", "bridge_c", "bridge_d", "bridge_b", "michell",
                                             "lshape", "bridge_a", "cantilever"}));
  EXPECT_NE(r.out.find("lshape 160x160 0.5"), std::string::npos);
}

TEST_F(CliTest, ZeroBudgetExitsWithBudgetCode) {
  const auto out = dir_ / "zero";
  const auto r = invoke({"run", "--problem", problem_.string(), "--max-iters", "0", "--out", out.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  ASSERT_TRUE(fs::exists(out / "summary.json"));
  const auto doc = nlohmann::json::parse(io::read_file(out / "summary.json"));
  EXPECT_EQ(doc["termination"], "budget");
  EXPECT_EQ(doc["iterations"], 0);
  EXPECT_EQ(io::read_file(out / "convergence.csv"),
            "iter,elapsed_s,compliance,residual_inf,dv_inf,volume\n");
  EXPECT_TRUE(fs::exists(out / "final_density.pgm"));
}

TEST_F(CliTest, ConvergedRunWritesAllOutputs) {
  const auto out = dir_ / "conv";
  const auto r = invoke({"run", "--problem", problem_.string(), "--snapshot-every", "50", "--out",
                         out.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(io::read_file(out / "summary.json"));
  EXPECT_EQ(doc["termination"], "converged");
  const auto rec = io::parse_convergence(io::read_file(out / "convergence.csv"));
  ASSERT_FALSE(rec.rows.empty());
  EXPECT_EQ(doc["iterations"], rec.rows.back().iter);
  EXPECT_EQ(doc["compliance"].get<double>(), rec.rows.back().compliance);
  EXPECT_EQ(doc["volume"].get<double>(), rec.rows.back().volume);
  EXPECT_TRUE(fs::exists(out / "density_000050.pgm"));
  EXPECT_TRUE(fs::exists(out / "final_density.pgm"));
  const auto pgm = io::read_file(out / "final_density.pgm");
  EXPECT_EQ(pgm.substr(0, 12), "P5\n16 8\n255\n");
}

TEST_F(CliTest, IdenticalInvocationsAreByteIdentical) {
  std::vector<std::string> base{"run", "--problem", problem_.string(), "--max-iters", "150",
                                "--seed", "3", "--snapshot-every", "0", "--out"};
  auto a = base, b = base;
  a.push_back((dir_ / "a").string());
  b.push_back((dir_ / "b").string());
  ASSERT_EQ(invoke(a).code, 2);
  ASSERT_EQ(invoke(b).code, 2);
  for (const char* f : {"convergence.csv", "summary.json", "final_density.pgm"})
    EXPECT_EQ(io::read_file(dir_ / "a" / f), io::read_file(dir_ / "b" / f)) << f;
}

TEST_F(CliTest, TimingFlagRecordsElapsed) {
  const auto out = dir_ / "t";
  invoke({"run", "--problem", problem_.string(), "--max-iters", "5", "--timing", "--out", out.string()});
  const auto rec = io::parse_convergence(io::read_file(out / "convergence.csv"));
  ASSERT_EQ(rec.rows.size(), 5u);
  EXPECT_GT(rec.rows.back().elapsed_s, 0.0);
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  const auto cfg = dir_ / "config.json";
  std::ofstream(cfg) << R"({"algorithm": "fbto", "max_iters": 7})";
  const auto out = dir_ / "cfg";
  const auto r = invoke({"run", "--problem", problem_.string(), "--config", cfg.string(), "--algo",
                         "pgd", "--out", out.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  const auto doc = nlohmann::json::parse(io::read_file(out / "summary.json"));
  EXPECT_EQ(doc["config"]["algorithm"], "pgd_exact");
  EXPECT_EQ(doc["iterations"], 7);
}

TEST_F(CliTest, BenchRunScaled) {
  const auto out = dir_ / "bench";
  const auto r = invoke({"bench", "run", "michell", "--scale", "0.1", "--max-iters", "3", "--out",
                         out.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_EQ(io::read_file(out / "final_density.pgm").substr(0, 12), "P5\n24 16\n255");
}

TEST_F(CliTest, Errors) {
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"bench", "run", "nope"}).code, 1);
  EXPECT_EQ(invoke({"run", "--problem", (dir_ / "missing.json").string()}).code, 1);
  EXPECT_EQ(invoke({"run", "--problem", problem_.string(), "--algo", "sqp"}).code, 1);
  std::ofstream(dir_ / "bad.json") << R"({"nx": 4})";
  const auto r = invoke({"run", "--problem", (dir_ / "bad.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(invoke({"--help"}).code, 0); }
