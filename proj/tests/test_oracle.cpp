#include <gtest/gtest.h>

#include <cmath>

#include "mriccati/oracle.hpp"
#include "test_support.hpp"

using namespace mriccati;
using namespace mriccati::testing;

namespace {

OdeSolveReport scalar_oracle(double c, double g, std::size_t n) {
  const SampledProblem s = scalar_problem(c, g, 1.0, n);
  return solve_differential_riccati(s.a, s.problem.b, s.problem.c, s.problem.g);
}

}  // namespace

TEST(Oracle, ZeroDataGivesZero) {
  const TimeGrid g(1.0, 50);
  const auto z = OperatorFunction::zeros(g, 2, 2);
  const OdeSolveReport r = solve_differential_riccati(z, z, z, Matrix::Zero(2, 2));
  EXPECT_EQ(r.P_oracle.sup_norm(), 0.0);
  EXPECT_EQ(r.terminal_check, 0.0);
}

TEST(Oracle, ScalarClosedForms) {
  const OdeSolveReport t = scalar_oracle(1, 0, 2000);
  EXPECT_NEAR(t.P_oracle[0](0, 0), std::tanh(1.0), 1e-10);
  EXPECT_LE(scalar_error(t.P_oracle, tanh_solution), 1e-9);
  const OdeSolveReport r = scalar_oracle(0, 1, 2000);
  EXPECT_NEAR(r.P_oracle[0](0, 0), 0.5, 1e-10);
  EXPECT_LE(scalar_error(r.P_oracle, reciprocal_solution), 1e-9);
}

TEST(Oracle, FourthOrder) {
  const double e1 = scalar_error(scalar_oracle(1, 0, 20).P_oracle, tanh_solution);
  const double e2 = scalar_error(scalar_oracle(1, 0, 40).P_oracle, tanh_solution);
  EXPECT_GE(std::log2(e1 / e2), 3.7);
}

TEST(Oracle, SignConventionMatchesLinearTransport) {
  // B = 0, C = 0: P(t) = exp(A^T (T - t)) G exp(A (T - t)).
  const TimeGrid g(1.0, 400);
  Matrix a(2, 2), gm(2, 2);
  a << 0.2, 1.0, -0.5, -0.3;
  gm << 1.0, 0.2, 0.2, 0.5;
  const auto z = OperatorFunction::zeros(g, 2, 2);
  const OdeSolveReport r = solve_differential_riccati(OperatorFunction::constant(g, a), z, z, gm);
  const Matrix e = propagate_step(OperatorFunction::constant(TimeGrid(1.0, 1), a), 0);
  EXPECT_LT(op_norm(r.P_oracle[0] - e.transpose() * gm * e), 1e-12);
}

TEST(Oracle, SymmetricOutputForSymmetricData) {
  const SampledProblem s = sample_problem(random_problem_data(4, 8), 1.0, 100);
  const OdeSolveReport r = solve_differential_riccati(s.a, s.problem.b, s.problem.c, s.problem.g);
  for (std::size_t i = 0; i < r.P_oracle.size(); ++i) EXPECT_EQ(asymmetry(r.P_oracle[i]), 0.0);
}

TEST(Oracle, BlowUpIsReported) {
  // p' = p^2 with p(T) = -10 is -1 / (0.1 - (T - t)), singular at t = 0.9.
  const TimeGrid g(1.0, 100);
  const RiccatiProblem p = scalar_problem(0, 0, 1.0, 100).problem;
  try {
    solve_differential_riccati(OperatorFunction::zeros(g, 1, 1), p.b, p.c, Matrix::Constant(1, 1, -10.0));
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    ASSERT_TRUE(e.node().has_value());
    EXPECT_GE(*e.node(), 80u);
    EXPECT_LE(*e.node(), 90u);
  }
}

TEST(Oracle, RejectsInconsistentData) {
  const TimeGrid g(1.0, 10);
  const auto a = OperatorFunction::zeros(g, 1, 1);
  const auto no_mid = OperatorFunction::zeros(g, 1, 1, false);
  EXPECT_THROW(solve_differential_riccati(a, a, no_mid, Matrix::Zero(1, 1)), InvalidInput);
  EXPECT_THROW(solve_differential_riccati(a, a, OperatorFunction::zeros(TimeGrid(1.0, 11), 1, 1), Matrix::Zero(1, 1)),
               InvalidInput);
  EXPECT_THROW(solve_differential_riccati(a, a, a, Matrix::Zero(2, 2)), InvalidInput);
}

TEST(Compare, Examples) {
  const OdeSolveReport r = scalar_oracle(1, 0, 2000);
  EXPECT_EQ(compare(r.P_oracle, r), 0.0);
  const RiccatiSolution s = solve_monotone(scalar_problem(1, 0, 1.0, 2000).problem);
  EXPECT_LE(compare(s.P, r), 1e-5);
  EXPECT_THROW(compare(OperatorFunction::zeros(TimeGrid(1.0, 10), 1, 1), r), InvalidInput);
}
