#pragma once

// Linear (Lyapunov-type) backward integral equations
//
//   P(t) = V(t,T) G U(T,t) + int_t^T V(t,r) [Q12 - P Q1 - Q2 P](r) U(r,t) dr
//
// with U forward on X1 and V backward on X2. The solution is evaluated from
// its closed representation through perturbed families
//   Omega_fwd = U perturbed by -Q1 (second form),
//   Omega_bwd = V perturbed by -Q2 (first form),
// and, independently, by a direct Picard iteration on the equation itself.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mriccati/errors.hpp"
#include "mriccati/evolution.hpp"
#include "mriccati/linops.hpp"
#include "mriccati/volterra.hpp"

namespace mriccati {

/// W(t_i) = L(t_i, t_tau) G R(t_tau, t_i) + int_{t_i}^{t_tau} L(t_i, r) K(r) R(r, t_i) dr
/// for i = 0..tau, composite trapezoid rule. `left` is backward, `right`
/// forward; `kernel(i)` returns K(t_i). Entries above tau are left empty.
///
/// Uses W_i = L_i (W_{i+1} + h/2 K_{i+1}) R_i + h/2 K_i, which is the same
/// trapezoid sum because values of both families are products of steps.
template <typename Kernel>
std::vector<Matrix> conjugated_transport(const EvolutionFamily& left, const EvolutionFamily& right,
                                         const Matrix& terminal, std::size_t tau, Kernel&& kernel,
                                         std::size_t stop = 0) {
  if (left.direction() != Direction::backward || right.direction() != Direction::forward) {
    throw InvalidInput("conjugated_transport: expected (backward, forward) families");
  }
  if (!(left.grid() == right.grid())) throw InvalidInput("conjugated_transport: grid mismatch");
  if (tau >= left.grid().size() || stop > tau) {
    throw InvalidInput("conjugated_transport: node index out of range");
  }
  if (terminal.rows() != left.dimension() || terminal.cols() != right.dimension()) {
    throw InvalidInput("conjugated_transport: terminal value has the wrong shape");
  }
  const double half = 0.5 * left.grid().step_size();
  std::vector<Matrix> w(tau + 1);
  w[tau] = terminal;
  if (tau == stop) return w;
  Matrix k_hi = kernel(tau);
  for (std::size_t i = tau; i-- > stop;) {
    Matrix k_lo = kernel(i);
    w[i] = left.step(i) * (w[i + 1] + half * k_hi) * right.step(i) + half * k_lo;
    k_hi = std::move(k_lo);
  }
  return w;
}

/// Full-grid version returning an OperatorFunction (tau = T).
template <typename Kernel>
OperatorFunction conjugated_transport_full(const EvolutionFamily& left,
                                           const EvolutionFamily& right, const Matrix& terminal,
                                           Kernel&& kernel) {
  const TimeGrid& grid = left.grid();
  return OperatorFunction(grid, conjugated_transport(left, right, terminal, grid.last(),
                                                     std::forward<Kernel>(kernel)));
}

struct LinearIntegralProblem {
  EvolutionFamily forward;   // on X1
  EvolutionFamily backward;  // on X2
  OperatorFunction q12;      // X1 -> X2
  std::optional<OperatorFunction> q1;  // X1 -> X1
  std::optional<OperatorFunction> q2;  // X2 -> X2
  Matrix g;                  // X1 -> X2
};

namespace detail {

inline void validate(const LinearIntegralProblem& p) {
  if (p.forward.direction() != Direction::forward || p.backward.direction() != Direction::backward) {
    throw InvalidInput("LinearIntegralProblem: family directions are wrong");
  }
  const TimeGrid& grid = p.forward.grid();
  const auto n1 = p.forward.dimension();
  const auto n2 = p.backward.dimension();
  auto shape = [&](const OperatorFunction& f, Eigen::Index r, Eigen::Index c, const char* name) {
    if (!(f.grid() == grid)) throw InvalidInput(std::string("LinearIntegralProblem: ") + name + " grid mismatch");
    if (f.rows() != r || f.cols() != c) {
      throw InvalidInput(std::string("LinearIntegralProblem: ") + name + " dimension mismatch");
    }
  };
  if (!(p.backward.grid() == grid)) throw InvalidInput("LinearIntegralProblem: grid mismatch");
  shape(p.q12, n2, n1, "Q12");
  if (p.q1) shape(*p.q1, n1, n1, "Q1");
  if (p.q2) shape(*p.q2, n2, n2, "Q2");
  if (p.g.rows() != n2 || p.g.cols() != n1) throw InvalidInput("LinearIntegralProblem: G dimension mismatch");
}

inline OperatorFunction represent(const EvolutionFamily& left, const EvolutionFamily& right,
                                  const LinearIntegralProblem& p) {
  return conjugated_transport_full(left, right, p.g, [&](std::size_t i) { return p.q12[i]; });
}

}  // namespace detail

/// Omega (forward) solving Omega(t,s) = U(t,s) - int_s^t Omega(t,r) Q1(r) U(r,s) dr.
inline EvolutionFamily omega_forward(const EvolutionFamily& forward, const OperatorFunction& q1) {
  return perturb_forward({forward, q1, -1, VolterraForm::second});
}

/// Omega (backward) solving Omega(t,s) = V(t,s) - int_t^s V(t,r) Q2(r) Omega(r,s) dr.
inline EvolutionFamily omega_backward(const EvolutionFamily& backward, const OperatorFunction& q2) {
  return perturb_backward({backward, q2, -1, VolterraForm::first});
}

inline OperatorFunction solve_right_perturbed(const LinearIntegralProblem& p) {
  detail::validate(p);
  if (!p.q1 || p.q2) throw InvalidInput("solve_right_perturbed: needs Q1 and no Q2");
  return detail::represent(p.backward, omega_forward(p.forward, *p.q1), p);
}

inline OperatorFunction solve_left_perturbed(const LinearIntegralProblem& p) {
  detail::validate(p);
  if (!p.q2 || p.q1) throw InvalidInput("solve_left_perturbed: needs Q2 and no Q1");
  return detail::represent(omega_backward(p.backward, *p.q2), p.forward, p);
}

inline OperatorFunction solve_both_perturbed(const LinearIntegralProblem& p) {
  detail::validate(p);
  if (!p.q1 || !p.q2) throw InvalidInput("solve_both_perturbed: needs Q1 and Q2");
  return detail::represent(omega_backward(p.backward, *p.q2), omega_forward(p.forward, *p.q1), p);
}

/// Dispatches on which perturbations are present (none: plain transport).
inline OperatorFunction solve_linear(const LinearIntegralProblem& p) {
  if (p.q1 && p.q2) return solve_both_perturbed(p);
  if (p.q1) return solve_right_perturbed(p);
  if (p.q2) return solve_left_perturbed(p);
  detail::validate(p);
  return detail::represent(p.backward, p.forward, p);
}

/// Right-hand side of the defining equation evaluated at P.
inline OperatorFunction linear_rhs(const LinearIntegralProblem& p, const OperatorFunction& P) {
  detail::validate(p);
  if (!(P.grid() == p.forward.grid())) throw InvalidInput("linear_rhs: grid mismatch");
  return conjugated_transport_full(p.backward, p.forward, p.g, [&](std::size_t i) {
    Matrix k = p.q12[i];
    if (p.q1) k -= P[i] * (*p.q1)[i];
    if (p.q2) k -= (*p.q2)[i] * P[i];
    return k;
  });
}

/// max over nodes of ||P - rhs(P)||.
inline double linear_residual(const LinearIntegralProblem& p, const OperatorFunction& P) {
  return sup_distance(P, linear_rhs(p, P));
}

struct LinearPicardResult {
  OperatorFunction P;
  std::size_t iterations = 0;
  std::vector<double> history;
};

/// Direct fixed-point iteration P <- rhs(P) from P = 0. The map is of
/// Volterra type, so the iteration converges on the whole interval.
inline LinearPicardResult solve_linear_picard(const LinearIntegralProblem& p, double tol = 1e-13,
                                              std::size_t max_iter = 500) {
  detail::validate(p);
  LinearPicardResult r;
  r.P = OperatorFunction::zeros(p.forward.grid(), p.g.rows(), p.g.cols(), false);
  for (std::size_t k = 0; k < max_iter; ++k) {
    OperatorFunction next = linear_rhs(p, r.P);
    const double diff = sup_distance(next, r.P);
    r.P = std::move(next);
    r.history.push_back(diff);
    r.iterations = k + 1;
    if (diff <= tol * (1.0 + r.P.sup_norm())) return r;
  }
  throw NonConvergence("solve_linear_picard: no convergence", r.history);
}

}  // namespace mriccati
