#pragma once

// Closed-loop check of a computed P on the linear-quadratic problem
//   x' = A x + B_u u,  J = int_0^T (<C x, x> + |u|^2) dt + <G x(T), x(T)>,
// whose optimal cost from x0 is <P(0) x0, x0> with feedback u = -B_u^T P x.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mriccati/errors.hpp"
#include "mriccati/evolution.hpp"
#include "mriccati/linops.hpp"
#include "mriccati/problem_io.hpp"

namespace mriccati {

struct LqrReport {
  double predicted = 0.0;  // <P(0) x0, x0>
  double cost = 0.0;       // realized with the feedback law
  std::vector<double> perturbed_costs;
  double tol = 0.0;
  bool cost_matches = false;
  bool no_better_control = false;
};

struct LqrOptions {
  double tol = 1e-5;  // relative: |cost - predicted| <= tol (1 + |predicted|)
  std::size_t perturbations = 10;
  double amplitude = 0.1;
  std::uint64_t seed = 20240601;
};

namespace detail {

// Open-loop perturbation w(t) = w0 + w1 t / T + w2 sin(2 pi t / T).
struct Perturbation {
  Vector w0, w1, w2;
  double horizon = 1.0;

  Vector operator()(double t) const {
    if (w0.size() == 0) return {};
    const double s = horizon > 0.0 ? t / horizon : 0.0;
    return w0 + s * w1 + std::sin(2.0 * M_PI * s) * w2;
  }
};

}  // namespace detail

/// Simulates the loop with RK4 on the solution grid. P between nodes uses
/// cubic Hermite interpolation with slopes from the differential form.
inline double simulate_lqr_cost(const io::ProblemFile& f, const OperatorFunction& P,
                                const Vector& x0, const detail::Perturbation& w) {
  if (!f.a || !f.b_factor) throw InvalidInput("lqr-demo: needs 'A' and 'B_factor'");
  const TimeGrid& grid = P.grid();
  const auto n = f.dimension;
  if (x0.size() != n) throw InvalidInput("lqr-demo: x0 has the wrong dimension");
  const double h = grid.step_size();

  auto slope = [&](double t, const Matrix& p) -> Matrix {
    const Matrix a = (*f.a)(t);
    const Matrix bu = (*f.b_factor)(t);
    return -f.c(t) - a.transpose() * p - p * a + p * bu * bu.transpose() * p;
  };
  auto deriv = [&](double t, const Matrix& p, const Vector& x, double& running) -> Vector {
    const Matrix a = (*f.a)(t);
    const Matrix bu = (*f.b_factor)(t);
    Vector u = -bu.transpose() * p * x;
    if (w.w0.size() != 0) u += w(t);
    running = quadratic_form(f.c(t), x) + u.squaredNorm();
    return a * x + bu * u;
  };

  Vector x = x0;
  double cost = 0.0;
  Matrix d_lo = grid.steps() > 0 ? slope(grid.node(0), P[0]) : Matrix();
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const double t0 = grid.node(i);
    const double t1 = grid.node(i + 1);
    const Matrix d_hi = slope(t1, P[i + 1]);
    const Matrix p_mid = 0.5 * (P[i] + P[i + 1]) + (h / 8.0) * (d_lo - d_hi);
    double j1, j2, j3, j4;
    const Vector k1 = deriv(t0, P[i], x, j1);
    const Vector k2 = deriv(t0 + 0.5 * h, p_mid, x + 0.5 * h * k1, j2);
    const Vector k3 = deriv(t0 + 0.5 * h, p_mid, x + 0.5 * h * k2, j3);
    const Vector k4 = deriv(t1, P[i + 1], x + h * k3, j4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    cost += (h / 6.0) * (j1 + 2.0 * j2 + 2.0 * j3 + j4);
    d_lo = d_hi;
  }
  return cost + quadratic_form(f.g, x);
}

inline LqrReport lqr_demo(const io::ProblemFile& f, const OperatorFunction& P, const Vector& x0,
                          const LqrOptions& opt = {}) {
  LqrReport r;
  r.predicted = quadratic_form(P[0], x0);
  r.cost = simulate_lqr_cost(f, P, x0, {});
  r.tol = opt.tol * (1.0 + std::abs(r.predicted));
  r.cost_matches = std::abs(r.cost - r.predicted) <= r.tol;

  const auto m = f.b_factor->cols();
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, opt.amplitude);
  auto draw = [&] {
    Vector v(m);
    for (Eigen::Index k = 0; k < m; ++k) v(k) = normal(rng);
    return v;
  };
  r.no_better_control = true;
  for (std::size_t k = 0; k < opt.perturbations; ++k) {
    detail::Perturbation w{draw(), draw(), draw(), P.grid().horizon()};
    const double c = simulate_lqr_cost(f, P, x0, w);
    r.perturbed_costs.push_back(c);
    if (c < r.cost - r.tol) r.no_better_control = false;
  }
  return r;
}

}  // namespace mriccati
