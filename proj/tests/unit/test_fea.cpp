#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "topopt/fea.hpp"
#include "topopt/parallel.hpp"
#include "topopt/problems.hpp"

namespace fea = topopt::fea;
using topopt::Vector;

namespace {

Eigen::Matrix<double, 8, 8> ke_matrix(const fea::ElementMatrix& ke) {
  Eigen::Matrix<double, 8, 8> m;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) m(i, j) = ke[8 * i + j];
  return m;
}

fea::GridModel free_grid(int nx, int ny) {
  const std::size_t n = 2 * static_cast<std::size_t>(nx + 1) * (ny + 1);
  return fea::GridModel(nx, ny, {}, std::vector<std::uint8_t>(n, 0), Vector(n, 0.0));
}

}  // namespace

TEST(Material, RejectsBadParameters) {
  EXPECT_THROW((fea::Material{0.0, 0.3}.validate()), std::invalid_argument);
  EXPECT_THROW((fea::Material{1.0, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((fea::Material{1.0, -0.1}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((fea::Material{1.0, 0.0}.validate()));
}

TEST(ElementStiffness, MatchesClosedForm) {
  for (double nu : {0.0, 0.3, 0.45}) {
    const auto ke = ke_matrix(fea::element_stiffness({1.0, nu}));
    EXPECT_LT((ke - oracle::closed_form_ke(nu)).cwiseAbs().maxCoeff(), 1e-12) << "nu=" << nu;
  }
}

TEST(ElementStiffness, SymmetricWithRigidNullspace) {
  const auto ke = ke_matrix(fea::element_stiffness({1.0, 0.3}));
  EXPECT_LT((ke - ke.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::Matrix<double, 8, 1> tx, ty;
  tx << 1, 0, 1, 0, 1, 0, 1, 0;
  ty << 0, 1, 0, 1, 0, 1, 0, 1;
  EXPECT_LT((ke * tx).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((ke * ty).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ElementStiffness, ThreeZeroEigenvalues) {
  const auto ke = ke_matrix(fea::element_stiffness({1.0, 0.3}));
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> es(ke);
  int zeros = 0, positive = 0;
  for (int i = 0; i < 8; ++i) {
    const double lam = es.eigenvalues()(i);
    if (std::abs(lam) < 1e-12) ++zeros;
    else if (lam > 0) ++positive;
  }
  EXPECT_EQ(zeros, 3);
  EXPECT_EQ(positive, 5);
}

TEST(GridModel, ZeroesLoadOnFixedDofs) {
  std::vector<std::uint8_t> fixed(12, 0);
  fixed[0] = fixed[1] = fixed[2] = 1;
  const fea::GridModel g(2, 1, {}, fixed, Vector(12, 1.0));
  EXPECT_EQ(g.load()[0], 0.0);
  EXPECT_EQ(g.load()[2], 0.0);
  EXPECT_EQ(g.load()[3], 1.0);
  EXPECT_EQ(g.num_fixed(), 3u);
}

TEST(GridModel, RejectsMismatchedSizes) {
  EXPECT_THROW(fea::GridModel(2, 1, {}, std::vector<std::uint8_t>(5, 0), Vector(12, 0.0)),
               std::invalid_argument);
  EXPECT_THROW(fea::GridModel(2, 1, {}, std::vector<std::uint8_t>(12, 0), Vector(3, 0.0)),
               std::invalid_argument);
}

TEST(ApplyStiffness, ZeroInZeroOut) {
  const auto spec = oracle::small_cantilever(3, 2);
  const auto g = topopt::problems::resolve(spec);
  const Vector a(g.num_elements(), 1.0);
  const Vector out = fea::apply_stiffness(g, a, Vector(g.num_dofs(), 0.0));
  EXPECT_EQ(topopt::norm_inf(out), 0.0);
}

TEST(ApplyStiffness, RigidTranslationWithoutSupports) {
  const auto g = free_grid(3, 2);
  const Vector a = oracle::random_vector(g.num_elements(), 0.1, 1.0, 3);
  Vector tx(g.num_dofs(), 0.0), ty(g.num_dofs(), 0.0);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    tx[2 * i] = 1.0;
    ty[2 * i + 1] = 1.0;
  }
  EXPECT_LT(topopt::norm_inf(fea::apply_stiffness(g, a, tx)), 1e-14);
  EXPECT_LT(topopt::norm_inf(fea::apply_stiffness(g, a, ty)), 1e-14);
}

TEST(ApplyStiffness, MatchesDenseAssembly) {
  for (auto [nx, ny] : {std::pair{2, 1}, std::pair{4, 3}}) {
    const auto g = topopt::problems::resolve(oracle::small_cantilever(nx, ny));
    const Vector a = oracle::random_vector(g.num_elements(), 0.1, 1.0, 11);
    const Vector u = oracle::random_vector(g.num_dofs(), -1.0, 1.0, 12);
    Vector u_masked = u;
    for (std::size_t i = 0; i < u.size(); ++i)
      if (g.is_fixed(i)) u_masked[i] = 0.0;
    const Eigen::VectorXd ref = oracle::dense_stiffness(g, a, false) * oracle::to_eigen(u_masked);
    const Vector got = fea::apply_stiffness(g, a, u);
    EXPECT_LT((oracle::to_eigen(got) - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ApplyStiffness, LinearAndSymmetric) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(5, 4));
  const Vector a = oracle::random_vector(g.num_elements(), 0.1, 1.0, 21);
  const Vector a2 = oracle::random_vector(g.num_elements(), 0.1, 1.0, 22);
  const Vector u = oracle::random_vector(g.num_dofs(), -1.0, 1.0, 23);
  const Vector w = oracle::random_vector(g.num_dofs(), -1.0, 1.0, 24);

  const Vector Ku = fea::apply_stiffness(g, a, u);
  const Vector Kw = fea::apply_stiffness(g, a, w);
  const double uKw = topopt::dot(u, Kw), wKu = topopt::dot(w, Ku);
  EXPECT_NEAR(uKw, wKu, 1e-12 * std::abs(uKw));

  Vector sum_uw(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) sum_uw[i] = 2.0 * u[i] - 3.0 * w[i];
  const Vector K_sum = fea::apply_stiffness(g, a, sum_uw);
  for (std::size_t i = 0; i < u.size(); ++i)
    EXPECT_NEAR(K_sum[i], 2.0 * Ku[i] - 3.0 * Kw[i], 1e-12);

  Vector a_sum(a.size());
  for (std::size_t e = 0; e < a.size(); ++e) a_sum[e] = a[e] + a2[e];
  const Vector Ka2u = fea::apply_stiffness(g, a2, u);
  const Vector Kasum = fea::apply_stiffness(g, a_sum, u);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(Kasum[i], Ku[i] + Ka2u[i], 1e-12);
}

TEST(ApplyStiffness, PositiveDefiniteOnFreeDofs) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(6, 4));
  const Vector a(g.num_elements(), 1e-3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Vector u = oracle::random_vector(g.num_dofs(), -1.0, 1.0, seed);
    for (std::size_t i = 0; i < u.size(); ++i)
      if (g.is_fixed(i)) u[i] = 0.0;
    EXPECT_GT(fea::compliance_energy(g, a, u), 0.0);
  }
}

TEST(ApplyStiffness, DeterministicAcrossThreadCounts) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(40, 30));
  const Vector a = oracle::random_vector(g.num_elements(), 0.1, 1.0, 5);
  const Vector u = oracle::random_vector(g.num_dofs(), -1.0, 1.0, 6);
  const int before = topopt::num_threads();
  topopt::set_num_threads(1);
  const Vector one = fea::apply_stiffness(g, a, u);
  topopt::set_num_threads(4);
  const Vector four = fea::apply_stiffness(g, a, u);
  topopt::set_num_threads(before);
  EXPECT_EQ(one, four);
}

TEST(ComplianceEnergy, QuadraticAndMatchesSolve) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(2, 2));
  const Vector a(g.num_elements(), 1.0);
  EXPECT_EQ(fea::compliance_energy(g, a, Vector(g.num_dofs(), 0.0)), 0.0);
  const Vector u = oracle::random_vector(g.num_dofs(), -1.0, 1.0, 1);
  Vector u2 = u;
  for (double& x : u2) x *= 2.0;
  EXPECT_NEAR(fea::compliance_energy(g, a, u2), 4.0 * fea::compliance_energy(g, a, u), 1e-12);

  const Vector uf = oracle::dense_solve(g, a);
  EXPECT_NEAR(fea::compliance_energy(g, a, uf), 0.5 * topopt::dot(g.load(), uf), 1e-10);
}

TEST(ExactSolve, SingleElementMatchesDense) {
  // Left edge clamped, unit downward load at the lower-right corner.
  std::vector<std::uint8_t> fixed(8, 0);
  Vector f(8, 0.0);
  // Node ids: 0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right.
  fixed[0] = fixed[1] = fixed[4] = fixed[5] = 1;
  f[7] = -1.0;
  const fea::GridModel g(1, 1, {}, fixed, f);
  const Vector a{1.0};
  const Vector u = fea::exact_solve(g, a, 1e-12);
  const Vector ref = oracle::dense_solve(g, a);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(u[i], ref[i], 1e-10);
}

TEST(ExactSolve, ZeroLoadGivesZero) {
  const auto spec = oracle::small_cantilever(4, 4);
  const auto g0 = topopt::problems::resolve(spec);
  const fea::GridModel g(4, 4, {}, std::vector<std::uint8_t>(g0.fixed_dofs().begin(), g0.fixed_dofs().end()),
                         Vector(g0.num_dofs(), 0.0));
  const Vector u = fea::exact_solve(g, Vector(16, 1.0), 1e-10);
  EXPECT_EQ(topopt::norm_inf(u), 0.0);
}

TEST(ExactSolve, MeetsResidualContractAndEnergyIdentity) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(16, 8));
  const Vector a = topopt::solver::activation(oracle::random_vector(g.num_elements(), 0.1, 1.0, 9), 3.0);
  fea::SolveStats stats;
  const Vector u = fea::exact_solve(g, a, 1e-10, {}, &stats);
  Vector r(g.num_dofs());
  fea::residual(g, a, u, r);
  EXPECT_LE(topopt::norm_inf(r), 1e-10);
  EXPECT_GT(stats.iterations, 0);
  const double lhs = 0.5 * topopt::dot(g.load(), u);
  EXPECT_NEAR(fea::compliance_energy(g, a, u), lhs, 1e-8 * lhs);
}

TEST(ExactSolve, RequiresSupports) {
  const auto g = free_grid(2, 2);
  EXPECT_THROW(fea::exact_solve(g, Vector(4, 1.0), 1e-10), fea::SolverFailure);
}

TEST(EstimateRhoMax, SingleElementWithinOnePercent) {
  const auto g = free_grid(1, 1);
  const Vector a{1.0};
  const auto ke = ke_matrix(g.ke());
  const double lam = Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>>(ke).eigenvalues().maxCoeff();
  const auto est = fea::estimate_rho_max(g, a, 100);
  EXPECT_NEAR(est.rho_max, lam, 0.01 * lam);
  EXPECT_LE(est.rho_max, lam * (1 + 1e-12));
}

TEST(EstimateRhoMax, ScalesWithActivation) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(8, 6));
  const Vector a = oracle::random_vector(g.num_elements(), 0.2, 1.0, 4);
  Vector a2 = a;
  for (double& x : a2) x *= 2.0;
  const double r1 = fea::estimate_rho_max(g, a, 60).rho_max;
  const double r2 = fea::estimate_rho_max(g, a2, 60).rho_max;
  EXPECT_NEAR(r2, 2.0 * r1, 0.01 * 2.0 * r1);
}

TEST(EstimateRhoMax, MonotoneInIterations) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(8, 6));
  const Vector a = oracle::random_vector(g.num_elements(), 0.1, 1.0, 8);
  double prev = 0.0;
  for (int it = 5; it <= 80; it += 5) {
    const double r = fea::estimate_rho_max(g, a, it).rho_max;
    EXPECT_GE(r, prev * (1 - 1e-12)) << "iters=" << it;
    prev = r;
  }
  EXPECT_THROW(fea::estimate_rho_max(g, a, 4), std::invalid_argument);
}

TEST(EstimateRhoMax, BelowDenseSpectrumOfMaskedOperator) {
  const auto g = topopt::problems::resolve(oracle::small_cantilever(5, 4));
  const Vector a = oracle::random_vector(g.num_elements(), 0.1, 1.0, 2);
  const Eigen::MatrixXd K = oracle::dense_stiffness(g, a, false);
  const double lam = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues().maxCoeff();
  const double est = fea::estimate_rho_max(g, a, 200).rho_max;
  EXPECT_LE(est, lam * (1 + 1e-12));
  EXPECT_GT(est, 0.95 * lam);
}
