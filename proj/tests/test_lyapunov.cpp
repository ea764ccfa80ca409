#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "mriccati/lyapunov.hpp"

using namespace mriccati;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

struct Families {
  TimeGrid grid;
  EvolutionFamily fwd, bwd;
};

Families families(const TimeGrid& g, const Matrix& a) {
  Families s{g, build_forward_family(OperatorFunction::constant(g, a)), {}};
  s.bwd = adjoint_backward_family(s.fwd);
  return s;
}

LinearIntegralProblem scalar_problem(const TimeGrid& g, double q12, std::optional<double> q1,
                                     std::optional<double> q2, double gv) {
  const Families s = families(g, scalar(0));
  LinearIntegralProblem p{s.fwd, s.bwd, OperatorFunction::constant(g, scalar(q12), false), {}, {}, scalar(gv)};
  if (q1) p.q1 = OperatorFunction::constant(g, scalar(*q1), false);
  if (q2) p.q2 = OperatorFunction::constant(g, scalar(*q2), false);
  return p;
}

double sup_error(const OperatorFunction& P, const std::function<double(double)>& exact) {
  double e = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) e = std::max(e, std::abs(P[i](0, 0) - exact(P.grid().node(i))));
  return e;
}

LinearIntegralProblem matrix_problem(const TimeGrid& g, double q1_scale, double q2_scale) {
  Matrix a(2, 2), q1(2, 2), q2(2, 2), q12(2, 2), gm(2, 2);
  a << 0, 0.6, -0.6, -0.1;
  q1 << 1.0, 0.3, -0.2, 0.5;
  q2 << 0.4, 0.0, 0.5, 1.0;
  q12 << 1.0, 0.2, 0.2, 0.5;
  gm << 0.5, 0.1, 0.1, 0.3;
  const Families s = families(g, a);
  LinearIntegralProblem p{s.fwd, s.bwd, OperatorFunction::sample(g, [&](double t) { return Matrix((1 + t) * q12); }, false),
                          {}, {}, gm};
  if (q1_scale > 0) p.q1 = OperatorFunction::constant(g, Matrix(q1_scale * q1), false);
  if (q2_scale > 0) p.q2 = OperatorFunction::constant(g, Matrix(q2_scale * q2), false);
  return p;
}

}  // namespace

TEST(ConjugatedTransport, MatchesDirectTrapezoidSum) {
  const TimeGrid g(1.0, 12);
  Matrix a(2, 2);
  a << 0.1, 1, -1, 0.2;
  const Families s = families(g, a);
  const Matrix term = Matrix::Identity(2, 2);
  auto kernel = [&](std::size_t i) { return Matrix(Matrix::Constant(2, 2, 1.0 + g.node(i))); };
  const auto w = conjugated_transport(s.bwd, s.fwd, term, g.last(), kernel);
  const double h = g.step_size();
  for (std::size_t i = 0; i < g.size(); ++i) {
    Matrix direct = s.bwd.value(i, g.last()) * term * s.fwd.value(g.last(), i);
    for (std::size_t r = i; r <= g.last(); ++r) {
      const double wgt = (r == i || r == g.last()) ? 0.5 * h : h;
      direct += wgt * s.bwd.value(i, r) * kernel(r) * s.fwd.value(r, i);
    }
    if (i == g.last()) direct = term;
    EXPECT_LT(op_norm(w[i] - direct), 1e-13);
  }
  EXPECT_THROW(conjugated_transport(s.fwd, s.bwd, term, g.last(), kernel), InvalidInput);
  EXPECT_THROW(conjugated_transport(s.bwd, s.fwd, term, 13, kernel), InvalidInput);
}

TEST(SolveLinear, HomogeneousTransportOfG) {
  const TimeGrid g(1.0, 20);
  LinearIntegralProblem p = matrix_problem(g, 0, 0);
  p.q12 = OperatorFunction::zeros(g, 2, 2, false);
  const Matrix expected_0 = p.backward.value(0, g.last()) * p.g * p.forward.value(g.last(), 0);
  EXPECT_LT(op_norm(solve_linear(p)[0] - expected_0), 1e-13);
  p.q1 = OperatorFunction::zeros(g, 2, 2, false);
  const OperatorFunction P = solve_right_perturbed(p);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_LT(op_norm(P[i] - p.backward.value(i, g.last()) * p.g * p.forward.value(g.last(), i)), 1e-13);
  }
  p.q1.reset();
  p.q2 = OperatorFunction::zeros(g, 2, 2, false);
  EXPECT_LT(op_norm(solve_left_perturbed(p)[0] - expected_0), 1e-13);
}

TEST(SolveLinear, ScalarRightPerturbedExponential) {
  const TimeGrid g(1.0, 400);
  const double q = 0.8, gv = 1.5;
  const OperatorFunction P = solve_right_perturbed(scalar_problem(g, 0, q, std::nullopt, gv));
  EXPECT_LT(sup_error(P, [&](double t) { return gv * std::exp(-q * (1 - t)); }), 1e-5);
}

TEST(SolveLinear, ScalarPureIntegrationIsExact) {
  const TimeGrid g(2.0, 50);
  const OperatorFunction P = solve_right_perturbed(scalar_problem(g, 0.7, 0.0, std::nullopt, 1.25));
  EXPECT_LT(sup_error(P, [](double t) { return 1.25 + 0.7 * (2.0 - t); }), 1e-13);
}

TEST(SolveLinear, ScalarLeftPerturbedExponential) {
  const TimeGrid g(1.0, 400);
  const OperatorFunction P = solve_left_perturbed(scalar_problem(g, 0, std::nullopt, 0.6, 2.0));
  EXPECT_LT(sup_error(P, [](double t) { return 2.0 * std::exp(-0.6 * (1 - t)); }), 1e-5);
}

TEST(SolveLinear, ScalarBothPerturbedExponential) {
  const TimeGrid g(1.0, 400);
  const OperatorFunction P = solve_both_perturbed(scalar_problem(g, 0, 0.5, 0.3, 1.0));
  EXPECT_LT(sup_error(P, [](double t) { return std::exp(-0.8 * (1 - t)); }), 1e-5);
}

TEST(SolveLinear, ResidualIsSecondOrder) {
  auto residual = [](std::size_t n) {
    const LinearIntegralProblem p = matrix_problem(TimeGrid(1.0, n), 0.5, 0.5);
    return linear_residual(p, solve_linear(p));
  };
  const double r1 = residual(100), r2 = residual(200);
  EXPECT_LT(r2, 1e-4);
  EXPECT_GE(std::log2(r1 / r2), 1.8);
}

TEST(SolveLinear, OneSidedResidualsAreSecondOrder) {
  for (auto [a, b] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}}) {
    const LinearIntegralProblem p1 = matrix_problem(TimeGrid(1.0, 100), a, b);
    const LinearIntegralProblem p2 = matrix_problem(TimeGrid(1.0, 200), a, b);
    const double r1 = linear_residual(p1, solve_linear(p1)), r2 = linear_residual(p2, solve_linear(p2));
    EXPECT_GE(std::log2(r1 / r2), 1.8);
  }
}

TEST(SolveLinear, AgreesWithDirectPicardAtN200) {
  const TimeGrid g(1.0, 200);
  LinearIntegralProblem p = matrix_problem(g, 0.4, 0.25);
  p.g *= 0.2;
  p.q12 = p.q12.map([](const Matrix& m) { return Matrix(0.2 * m); });
  const LinearPicardResult pic = solve_linear_picard(p);
  EXPECT_LE(sup_distance(pic.P, solve_linear(p)), 1e-6);
  EXPECT_LT(pic.history.back(), 1e-12);
}

TEST(SolveLinear, ScalarPicardUniqueness) {
  const TimeGrid g(1.0, 200);
  for (const auto& p : {scalar_problem(g, 0.3, 0.7, std::nullopt, 1.0),
                        scalar_problem(g, 0.3, std::nullopt, 0.7, 1.0)}) {
    EXPECT_LE(sup_distance(solve_linear_picard(p).P, solve_linear(p)), 1e-8);
  }
}

TEST(SolveLinear, AdditiveInDataAndTerminalValue) {
  const TimeGrid g(1.0, 60);
  LinearIntegralProblem p1 = matrix_problem(g, 0.5, 0.3);
  LinearIntegralProblem p2 = p1;
  p2.g = Matrix::Identity(2, 2);
  p2.q12 = OperatorFunction::sample(g, [](double t) { return Matrix(Matrix::Constant(2, 2, std::cos(t))); }, false);
  LinearIntegralProblem sum = p1;
  sum.g = p1.g + p2.g;
  std::vector<Matrix> nodes;
  for (std::size_t i = 0; i < g.size(); ++i) nodes.push_back(p1.q12[i] + p2.q12[i]);
  sum.q12 = OperatorFunction(g, nodes);
  const OperatorFunction a = solve_linear(p1), b = solve_linear(p2), c = solve_linear(sum);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LT(op_norm(c[i] - a[i] - b[i]), 1e-13);
}

TEST(SolveLinear, RejectsMismatchedData) {
  const TimeGrid g(1.0, 10);
  LinearIntegralProblem p = matrix_problem(g, 1.0, 0.0);
  p.g = Matrix::Identity(3, 3);
  EXPECT_THROW(solve_linear(p), InvalidInput);
  p = matrix_problem(g, 1.0, 0.0);
  p.q12 = OperatorFunction::zeros(TimeGrid(1.0, 11), 2, 2, false);
  EXPECT_THROW(solve_linear(p), InvalidInput);
  p = matrix_problem(g, 1.0, 0.0);
  EXPECT_THROW(solve_left_perturbed(p), InvalidInput);
  EXPECT_THROW(solve_both_perturbed(p), InvalidInput);
  p.q1 = OperatorFunction::zeros(g, 3, 3, false);
  EXPECT_THROW(solve_right_perturbed(p), InvalidInput);
}

TEST(Omega, SignAndSideConventions) {
  const TimeGrid g(1.0, 300);
  const Families s = families(g, scalar(0));
  const EvolutionFamily of = omega_forward(s.fwd, OperatorFunction::constant(g, scalar(0.5), false));
  const EvolutionFamily ob = omega_backward(s.bwd, OperatorFunction::constant(g, scalar(0.5), false));
  EXPECT_NEAR(of.value(g.last(), 0)(0, 0), std::exp(-0.5), 1e-5);
  EXPECT_NEAR(ob.value(0, g.last())(0, 0), std::exp(-0.5), 1e-5);
}
