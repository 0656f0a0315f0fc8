#include "lqrpi/lqr.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "support/generators.hpp"

namespace lqrpi {
namespace {

using Eigen::MatrixXd;
using testing::Gen;

// Scalar plant a = 0.5, b = 1, s = r = 1. P* is the positive root of
// p^2 - 0.25 p - 1 = 0 and K* = 0.5 P* / (1 + P*).
constexpr double kScalarPstar = 1.1327822185373186;
constexpr double kScalarKstar = 0.2655644370746374;

Problem scalar_problem() {
  Problem p;
  p.sys.A = MatrixXd::Constant(1, 1, 0.5);
  p.sys.B = MatrixXd::Constant(1, 1, 1.0);
  p.sys.C = MatrixXd::Constant(1, 1, 1.0);
  p.cost.S = SymMat::Identity(1);
  p.cost.R = SymMat::Identity(1);
  return p;
}

Problem zero_problem() {
  Problem p;
  p.sys.A = MatrixXd::Zero(1, 1);
  p.sys.B = MatrixXd::Zero(1, 1);
  p.sys.C = MatrixXd::Zero(1, 1);
  p.cost.S = SymMat::Identity(1);
  p.cost.R = SymMat::Identity(1);
  return p;
}

TEST(GOfPTest, DegenerateScalar) {
  const Problem p = zero_problem();
  const auto g = g_of_p(p.sys, p.cost, SymMat(MatrixXd::Constant(1, 1, 3.0)));
  EXPECT_EQ(g.xx()(0, 0), -2.0);
  EXPECT_EQ(g.ux()(0, 0), 0.0);
  EXPECT_EQ(g.uu()(0, 0), 1.0);
}

TEST(GOfPTest, ZeroValueMatrix) {
  Gen gen(3);
  Problem p = gen.problem(3, 2);
  p.sys.B.setZero();
  const auto g = g_of_p(p.sys, p.cost, SymMat::Zero(3));
  EXPECT_EQ(g.xx().matrix(), p.cost.S.matrix());
  EXPECT_EQ(g.ux(), MatrixXd::Zero(2, 3));
  EXPECT_EQ(g.uu().matrix(), p.cost.R.matrix());
}

TEST(GOfPTest, BenchmarkUuBlock) {
  const Problem p = benchmark_problem();
  const auto g = g_of_p(p.sys, p.cost, SymMat::Identity(3));
  MatrixXd want(2, 2);
  want << 2.0, 0.1, 0.1, 1.03;
  EXPECT_TRUE(g.uu().matrix().isApprox(want, 1e-14));
  EXPECT_TRUE(g.full().matrix().isApprox(g.full().matrix().transpose(), 0.0));
}

TEST(QOfPTest, RelationToG) {
  Gen gen(8);
  const Problem p = gen.problem(3, 2);
  EXPECT_EQ(q_of_p(p.sys, p.cost, SymMat::Zero(3)).full().matrix(),
            g_of_p(p.sys, p.cost, SymMat::Zero(3)).full().matrix());
  for (int i = 0; i < 10; ++i) {
    const SymMat pm = gen.symmetric(3);
    const MatrixXd diff = q_of_p(p.sys, p.cost, pm).full().matrix() -
                          g_of_p(p.sys, p.cost, pm).full().matrix();
    EXPECT_LT((diff - blkdiag(pm.matrix(), MatrixXd::Zero(2, 2))).cwiseAbs().maxCoeff(), 1e-14);
  }
  const Problem z = zero_problem();
  const auto q = q_of_p(z.sys, z.cost, SymMat(MatrixXd::Constant(1, 1, 3.0)));
  EXPECT_EQ(q.xx()(0, 0), 1.0);
  EXPECT_EQ(q.uu()(0, 0), 1.0);
}

TEST(HOperatorTest, Expansions) {
  Gen gen(10);
  const PartitionedQuadratic g(3, 2, gen.symmetric(5));
  EXPECT_EQ(h_operator(g, MatrixXd::Zero(2, 3)).matrix(), g.xx().matrix());
  const MatrixXd k = gen.matrix(2, 3);
  const PartitionedQuadratic id(3, 2, SymMat::Identity(5));
  EXPECT_TRUE(h_operator(id, k).matrix().isApprox(MatrixXd::Identity(3, 3) + k.transpose() * k,
                                                  1e-14));
  // Direct block-matrix product.
  MatrixXd left(3, 5);
  left << MatrixXd::Identity(3, 3), -k.transpose();
  EXPECT_TRUE(h_operator(g, k).matrix().isApprox(left * g.full().matrix() * left.transpose(), 1e-12));
  EXPECT_THROW(h_operator(g, MatrixXd::Zero(3, 2)), DimensionError);
}

TEST(HOperatorTest, VanishesAtPolicyValue) {
  Gen gen(12);
  for (int i = 0; i < 10; ++i) {
    const Problem p = gen.problem(3, 2);
    const MatrixXd k = 0.1 * gen.matrix(2, 3);
    if (!is_stabilizing(p.sys, k)) continue;
    const SymMat pk = policy_eval(p.sys, p.cost, k);
    EXPECT_LT(h_operator(g_of_p(p.sys, p.cost, pk), k).norm(), 1e-9);
  }
}

TEST(PolicyEvalTest, ClosedForms) {
  Gen gen(13);
  Problem p = gen.problem(3, 2);
  p.sys.A.setZero();
  EXPECT_TRUE(policy_eval(p.sys, p.cost, zero_gain(p.sys)).matrix().isApprox(p.cost.S.matrix(), 1e-14));

  const Problem s = scalar_problem();
  EXPECT_NEAR(policy_eval(s.sys, s.cost, MatrixXd::Zero(1, 1))(0, 0), 4.0 / 3.0, 1e-14);
  // (s + k^2 r) / (1 - (a - b k)^2) at k = 0.2.
  EXPECT_NEAR(policy_eval(s.sys, s.cost, MatrixXd::Constant(1, 1, 0.2))(0, 0), 1.04 / 0.91, 1e-14);
}

TEST(PolicyEvalTest, NonStabilizingCarriesRadius) {
  const Problem s = scalar_problem();
  try {
    policy_eval(s.sys, s.cost, MatrixXd::Constant(1, 1, -1.0));
    FAIL();
  } catch (const NotStabilizingError& e) {
    EXPECT_DOUBLE_EQ(e.spectral_radius(), 1.5);
  }
}

TEST(PolicyEvalTest, MatchesSeriesOracle) {
  Gen gen(14);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + trial % 4;
    const Problem p = gen.problem(n, 1 + trial % 2, 0.7);
    const MatrixXd k = 0.05 * gen.matrix(p.sys.inputs(), n);
    if (!(closed_loop_radius(p.sys, k) < 0.95)) continue;
    const SymMat w(p.cost.S.matrix() + k.transpose() * p.cost.R.matrix() * k);
    const SymMat oracle = lyap_sum_oracle(p.sys.closed_loop(k), w, 2000);
    EXPECT_LT((policy_eval(p.sys, p.cost, k) - oracle).norm(), 1e-8);
  }
}

TEST(PolicyImproveTest, Examples) {
  MatrixXd full = MatrixXd::Zero(5, 5);
  full.bottomRightCorner(2, 2) = 2.0 * MatrixXd::Identity(2, 2);
  MatrixXd ux(2, 3);
  ux << 1, 0, 0, 0, 1, 0;
  full.bottomLeftCorner(2, 3) = ux;
  full.topRightCorner(3, 2) = ux.transpose();
  EXPECT_TRUE(policy_improve(PartitionedQuadratic(3, 2, SymMat(full))).isApprox(0.5 * ux, 1e-15));

  full.bottomLeftCorner(2, 3).setZero();
  full.topRightCorner(3, 2).setZero();
  EXPECT_EQ(policy_improve(PartitionedQuadratic(3, 2, SymMat(full))), MatrixXd::Zero(2, 3));
}

TEST(PolicyImproveTest, SingularBlock) {
  EXPECT_THROW(policy_improve(PartitionedQuadratic(3, 2, SymMat::Zero(5))), SingularBlockError);
  MatrixXd full = MatrixXd::Identity(5, 5);
  full(4, 4) = 1e-13;
  EXPECT_THROW(policy_improve(PartitionedQuadratic(3, 2, SymMat(full))), SingularBlockError);
}

TEST(ExactPiTest, ScalarConvergence) {
  const Problem s = scalar_problem();
  const PiTrace tr = exact_pi(s.sys, s.cost, MatrixXd::Zero(1, 1));
  ASSERT_TRUE(tr.converged);
  EXPECT_LE(tr.iterations.size(), 8U);
  EXPECT_NEAR(tr.iterations.back().value(0, 0), kScalarPstar, 1e-9);
  const AreSolution are = solve_are(s.sys, s.cost);
  EXPECT_NEAR(are.Pstar(0, 0), kScalarPstar, 1e-9);
  EXPECT_NEAR(are.Kstar(0, 0), kScalarKstar, 1e-9);
}

TEST(ExactPiTest, TraceInvariants) {
  const Problem p = benchmark_problem();
  const AreSolution are = solve_are(p.sys, p.cost);
  const PiTrace tr = exact_pi(p.sys, p.cost, zero_gain(p.sys), {}, are.Pstar);
  ASSERT_TRUE(tr.converged);
  ASSERT_TRUE(tr.final_error_to_Pstar.has_value());
  EXPECT_LT(tr.iterations.back().are_residual, 1e-9);
  for (std::size_t i = 0; i < tr.iterations.size(); ++i) {
    const auto& it = tr.iterations[i];
    EXPECT_EQ(it.index, i + 1);
    EXPECT_EQ(it.stabilizing, it.rho_closed_loop < 1.0);
    EXPECT_TRUE(it.stabilizing);
    if (i > 0) {
      EXPECT_TRUE(is_psd(tr.iterations[i - 1].value - it.value, 1e-9));
    }
  }
  EXPECT_TRUE(is_psd(tr.iterations.back().value - are.Pstar, 1e-8));
}

TEST(ExactPiTest, FixedPointStopsAfterOneEvaluation) {
  const Problem p = benchmark_problem();
  const AreSolution are = solve_are(p.sys, p.cost);
  const PiTrace tr = exact_pi(p.sys, p.cost, are.Kstar);
  ASSERT_TRUE(tr.converged);
  EXPECT_EQ(tr.iterations.size(), 1U);
  EXPECT_LT((tr.iterations.front().value - are.Pstar).norm(), 1e-11);
}

TEST(ExactPiTest, RejectsBadInputs) {
  const Problem s = scalar_problem();
  EXPECT_THROW(exact_pi(s.sys, s.cost, MatrixXd::Constant(1, 1, 2.0)), NotStabilizingError);
  EXPECT_THROW(exact_pi(s.sys, s.cost, MatrixXd::Zero(1, 1), {.tol = 0.0}), InvalidArgument);
  EXPECT_THROW(exact_pi(s.sys, s.cost, MatrixXd::Zero(2, 1)), DimensionError);
  Problem bad = s;
  bad.cost.R = SymMat(MatrixXd::Constant(1, 1, -1.0));
  EXPECT_THROW(exact_pi(bad.sys, bad.cost, MatrixXd::Zero(1, 1)), InvalidArgument);
}

TEST(ExactPiTest, QuadraticTailRate) {
  const Problem p = benchmark_problem();
  const AreSolution are = solve_are(p.sys, p.cost);
  const PiTrace tr = exact_pi(p.sys, p.cost, zero_gain(p.sys));
  std::vector<double> err;
  for (const auto& it : tr.iterations) err.push_back((it.value - are.Pstar).norm());
  double max_ratio = 0.0;
  int counted = 0;
  for (std::size_t i = 0; i + 1 < err.size(); ++i) {
    if (err[i] < 1e-6) break;  // floating-point floor
    max_ratio = std::max(max_ratio, err[i + 1] / (err[i] * err[i]));
    ++counted;
  }
  EXPECT_GE(counted, 2);
  EXPECT_LT(max_ratio, 10.0);
}

TEST(SolveAreTest, FixedPointAndResidual) {
  const Problem p = benchmark_problem();
  const AreSolution are = solve_are(p.sys, p.cost);
  EXPECT_LT(are.residual, 1e-10);
  EXPECT_GT(min_eigenvalue(are.Pstar), 0.0);
  EXPECT_LT(closed_loop_radius(p.sys, are.Kstar), 1.0);
  const auto g = g_of_p(p.sys, p.cost, are.Pstar);
  EXPECT_LT((policy_improve(g) - are.Kstar).norm(), 1e-9);
  EXPECT_LT(h_operator(g, are.Kstar).norm(), 1e-9);
  // K* = (R + B'P*B)^{-1} B'P*A.
  const MatrixXd k = (p.cost.R.matrix() + p.sys.B.transpose() * are.Pstar.matrix() * p.sys.B)
                         .inverse() * p.sys.B.transpose() * are.Pstar.matrix() * p.sys.A;
  EXPECT_LT((k - are.Kstar).norm(), 1e-12);
}

TEST(SolveAreTest, ZeroDynamics) {
  Gen gen(21);
  Problem p = gen.problem(3, 2);
  p.sys.A.setZero();
  const AreSolution are = solve_are(p.sys, p.cost);
  EXPECT_TRUE(are.Pstar.matrix().isApprox(p.cost.S.matrix(), 1e-14));
  EXPECT_LT(are.Kstar.norm(), 1e-14);
}

TEST(SolveAreTest, RandomSystemsAgreeWithIteratedRiccati) {
  Gen gen(99);
  for (int trial = 0; trial < 10; ++trial) {
    const Problem p = gen.problem(3, 2, 0.9);
    const AreSolution are = solve_are(p.sys, p.cost);
    // Riccati difference recursion from P = S converges to P* independently.
    MatrixXd x = p.cost.S.matrix();
    for (int k = 0; k < 5000; ++k) {
      const MatrixXd bpa = p.sys.B.transpose() * x * p.sys.A;
      x = p.sys.A.transpose() * x * p.sys.A -
          bpa.transpose() * (p.cost.R.matrix() + p.sys.B.transpose() * x * p.sys.B).inverse() * bpa +
          p.cost.S.matrix();
      x = 0.5 * (x + x.transpose()).eval();  // rounding excites an unstable antisymmetric mode
    }
    EXPECT_LT((x - are.Pstar.matrix()).norm(), 1e-8 * std::max(1.0, x.norm()));
  }
}

TEST(AvgCostTest, Examples) {
  EXPECT_DOUBLE_EQ(avg_cost(MatrixXd::Identity(3, 3),
                            SymMat(Eigen::Vector3d(1, 2, 3).asDiagonal().toDenseMatrix())),
                   6.0);
  EXPECT_EQ(avg_cost(MatrixXd::Zero(3, 2), SymMat::Identity(3)), 0.0);
  const Problem p = benchmark_problem();
  const SymMat p0 = policy_eval(p.sys, p.cost, zero_gain(p.sys));
  EXPECT_DOUBLE_EQ(avg_cost(p.sys.C, p0), p0.trace());
}

}  // namespace
}  // namespace lqrpi
