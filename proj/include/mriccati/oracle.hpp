#pragma once

// Independent check of the integral solvers: the differential form
//
//   P'(t) = -C(t) - A(t)^T P(t) - P(t) A(t) + P(t) B(t) P(t),   P(T) = G,
//
// integrated backward with the classical fourth-order Runge-Kutta method on
// the same grid. This is what the integral equation reduces to when
// U(t,s) is generated by A(t) and V(t,s) = U(s,t)^T: differentiating
// V(t,T) G U(T,t) gives -A^T(.) - (.)A, and the lower limit of the integral
// contributes -(C - PBP).
//
// Nothing here uses evolution families or trapezoid sums.

#include <cstddef>
#include <string>
#include <vector>

#include "mriccati/errors.hpp"
#include "mriccati/evolution.hpp"
#include "mriccati/linops.hpp"

namespace mriccati {

struct OdeSolveReport {
  OperatorFunction P_oracle;
  std::size_t max_step_rejections = 0;  // fixed step
  double terminal_check = 0.0;          // ||P(T) - G||
};

inline OdeSolveReport solve_differential_riccati(const OperatorFunction& a, const OperatorFunction& b,
                                                 const OperatorFunction& c, const Matrix& g) {
  const TimeGrid& grid = a.grid();
  if (!(b.grid() == grid) || !(c.grid() == grid)) {
    throw InvalidInput("solve_differential_riccati: data are not sampled on one grid");
  }
  const auto n = a.rows();
  auto square = [&](const OperatorFunction& f, const char* name) {
    if (f.rows() != n || f.cols() != n) {
      throw InvalidInput(std::string("solve_differential_riccati: ") + name + " must be " +
                         std::to_string(n) + "x" + std::to_string(n));
    }
    if (!f.has_midpoints()) {
      throw InvalidInput(std::string("solve_differential_riccati: ") + name +
                         " needs midpoint samples");
    }
  };
  square(a, "A");
  square(b, "B");
  square(c, "C");
  if (g.rows() != n || g.cols() != n) throw InvalidInput("solve_differential_riccati: G shape");

  bool symmetric = (g - g.transpose()).norm() == 0.0;
  for (std::size_t i = 0; i < grid.size() && symmetric; ++i) {
    symmetric = (b[i] - b[i].transpose()).norm() == 0.0 && (c[i] - c[i].transpose()).norm() == 0.0;
  }

  auto rhs = [](const Matrix& am, const Matrix& bm, const Matrix& cm, const Matrix& p) -> Matrix {
    return -cm - am.transpose() * p - p * am + p * bm * p;
  };

  std::vector<Matrix> out(grid.size());
  out.back() = g;
  const double h = grid.step_size();
  Matrix p = g;
  for (std::size_t i = grid.steps(); i-- > 0;) {
    const Matrix k1 = rhs(a[i + 1], b[i + 1], c[i + 1], p);
    const Matrix k2 = rhs(a.midpoint(i), b.midpoint(i), c.midpoint(i), p - 0.5 * h * k1);
    const Matrix k3 = rhs(a.midpoint(i), b.midpoint(i), c.midpoint(i), p - 0.5 * h * k2);
    const Matrix k4 = rhs(a[i], b[i], c[i], p - h * k3);
    p -= (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (symmetric) p = symmetrize(p);
    if (!p.allFinite()) {
      throw NumericalFailure("solve_differential_riccati: solution blew up at node " +
                                 std::to_string(i) + " (t = " + std::to_string(grid.node(i)) + ")",
                             i);
    }
    out[i] = p;
  }
  OdeSolveReport r;
  r.terminal_check = op_norm(out.back() - g);
  r.P_oracle = OperatorFunction(grid, std::move(out));
  return r;
}

inline double compare(const OperatorFunction& P, const OdeSolveReport& report) {
  if (!(P.grid() == report.P_oracle.grid())) throw InvalidInput("compare: grid mismatch");
  return sup_distance(P, report.P_oracle);
}

}  // namespace mriccati
