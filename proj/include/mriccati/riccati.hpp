#pragma once

// Backward Riccati integral equation
//
//   P(t) = V(t,T) G U(T,t) + int_t^T V(t,r) {C(r) - P(r) B(r) P(r)} U(r,t) dr
//
// with U a forward family on X1 and V a backward family on X2.
//
// Two solvers:
//  * solve_monotone: P_0 = 0 and P_{n+1} from the linearized equation,
//    evaluated through the perturbed families Psi_fwd (Q = -B P_n, second
//    form) and Psi_bwd (Q = -P_n B, first form). Requires the symmetric
//    setting V = U^T, C, B, G >= 0; the iterates then decrease in the
//    Loewner order.
//  * solve_picard_stepped: fixed-point iteration of the equation itself on
//    backward windows short enough for the map to be a contraction on a
//    norm ball. Works without symmetry.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mriccati/errors.hpp"
#include "mriccati/evolution.hpp"
#include "mriccati/linops.hpp"
#include "mriccati/lyapunov.hpp"
#include "mriccati/volterra.hpp"

namespace mriccati {

struct RiccatiProblem {
  EvolutionFamily forward;   // U on X1
  EvolutionFamily backward;  // V on X2
  OperatorFunction c;        // X1 -> X2
  OperatorFunction b;        // X2 -> X1
  Matrix g;                  // X1 -> X2
  bool symmetric_mode = true;
  std::optional<OperatorFunction> generator;  // A(t), when U was built from it

  const TimeGrid& grid() const noexcept { return forward.grid(); }
};

/// Problem with U generated by A(t) and V = U^T.
inline RiccatiProblem make_problem(const OperatorFunction& generator, OperatorFunction c,
                                   OperatorFunction b, Matrix g, bool symmetric_mode = true) {
  RiccatiProblem p;
  p.forward = build_forward_family(generator);
  p.backward = adjoint_backward_family(p.forward);
  p.c = std::move(c);
  p.b = std::move(b);
  p.g = std::move(g);
  p.symmetric_mode = symmetric_mode;
  p.generator = generator;
  return p;
}

inline void validate(const RiccatiProblem& p) {
  if (p.forward.direction() != Direction::forward || p.backward.direction() != Direction::backward) {
    throw InvalidInput("RiccatiProblem: family directions are wrong");
  }
  const TimeGrid& grid = p.grid();
  if (!(p.backward.grid() == grid) || !(p.c.grid() == grid) || !(p.b.grid() == grid)) {
    throw InvalidInput("RiccatiProblem: data are not sampled on one grid");
  }
  const auto n1 = p.forward.dimension();
  const auto n2 = p.backward.dimension();
  if (p.c.rows() != n2 || p.c.cols() != n1) throw InvalidInput("RiccatiProblem: C dimension mismatch");
  if (p.b.rows() != n1 || p.b.cols() != n2) throw InvalidInput("RiccatiProblem: B dimension mismatch");
  if (p.g.rows() != n2 || p.g.cols() != n1) throw InvalidInput("RiccatiProblem: G dimension mismatch");
  if (!all_finite(p.g)) throw InvalidInput("RiccatiProblem: G is not finite");
}

struct HypothesisReport {
  bool passed = true;
  std::string failure;
  std::optional<std::size_t> node;
  double duality_residual = 0.0;
};

/// Hypotheses of the monotone scheme: V(t,s) = U(s,t)^T, and C(t), B(t), G
/// self-adjoint nonnegative. Duality is checked on the step propagators,
/// which implies it for every grid pair.
inline HypothesisReport check_hypotheses(const RiccatiProblem& p, double tol = 1e-10) {
  validate(p);
  HypothesisReport r;
  auto fail = [&](std::string why, std::optional<std::size_t> node) {
    if (r.passed) {
      r.passed = false;
      r.failure = std::move(why);
      r.node = node;
    }
  };
  if (p.forward.dimension() != p.backward.dimension()) {
    fail("X1 and X2 differ in dimension", std::nullopt);
    return r;
  }
  for (std::size_t i = 0; i < p.grid().steps(); ++i) {
    const Matrix& s = p.forward.step(i);
    const double d = op_norm(p.backward.step(i) - s.transpose());
    r.duality_residual = std::max(r.duality_residual, d);
    if (d > tol * (1.0 + op_norm(s))) {
      fail("backward family is not the adjoint of the forward family", i);
    }
  }
  auto check_psd = [&](const Matrix& m, const std::string& name, std::optional<std::size_t> node) {
    const SymmetryReport s = symmetry_report(m, tol);
    if (!s.self_adjoint) fail(name + " is not self-adjoint", node);
    else if (!s.nonnegative) fail(name + " is not nonnegative", node);
  };
  for (std::size_t i = 0; i < p.grid().size(); ++i) {
    check_psd(p.c[i], "C", i);
    check_psd(p.b[i], "B", i);
  }
  check_psd(p.g, "G", std::nullopt);
  return r;
}

/// Perturbed forward family solving Psi(t,s) = U(t,s) - int_s^t Psi(t,r) B P U(r,s) dr.
inline EvolutionFamily closed_loop_forward(const RiccatiProblem& p, const OperatorFunction& P) {
  const OperatorFunction bp(p.grid(), [&] {
    std::vector<Matrix> v;
    v.reserve(P.size());
    for (std::size_t i = 0; i < P.size(); ++i) v.push_back(p.b[i] * P[i]);
    return v;
  }());
  return perturb_forward({p.forward, bp, -1, VolterraForm::second});
}

/// Perturbed backward family solving Psi(t,s) = V(t,s) - int_t^s V(t,r) P B Psi(r,s) dr.
inline EvolutionFamily closed_loop_backward(const RiccatiProblem& p, const OperatorFunction& P) {
  const OperatorFunction pb(p.grid(), [&] {
    std::vector<Matrix> v;
    v.reserve(P.size());
    for (std::size_t i = 0; i < P.size(); ++i) v.push_back(P[i] * p.b[i]);
    return v;
  }());
  return perturb_backward({p.backward, pb, -1, VolterraForm::first});
}

struct MonotoneStep {
  OperatorFunction next;
  double pre_symmetrization_defect = 0.0;
};

inline MonotoneStep monotone_step(const OperatorFunction& pn, const RiccatiProblem& p,
                                  double tol = 1e-10) {
  validate(p);
  if (!p.symmetric_mode) throw InvalidInput("monotone_step: requires symmetric mode");
  if (!(pn.grid() == p.grid()) || pn.rows() != p.g.rows() || pn.cols() != p.g.cols()) {
    throw InvalidInput("monotone_step: iterate does not match the problem");
  }
  for (std::size_t i = 0; i < pn.size(); ++i) {
    if (!is_self_adjoint(pn[i], tol)) {
      throw HypothesisViolation("monotone_step: iterate is not self-adjoint at node " +
                                    std::to_string(i), i);
    }
  }
  const EvolutionFamily psi_fwd = closed_loop_forward(p, pn);
  const EvolutionFamily psi_bwd = closed_loop_backward(p, pn);
  std::vector<Matrix> raw = conjugated_transport(psi_bwd, psi_fwd, p.g, p.grid().last(),
                                                 [&](std::size_t i) -> Matrix {
                                                   return p.c[i] + pn[i] * p.b[i] * pn[i];
                                                 });
  MonotoneStep out;
  for (auto& m : raw) {
    out.pre_symmetrization_defect = std::max(out.pre_symmetrization_defect, asymmetry(m));
    m = symmetrize(m);
  }
  // The terminal value is G exactly.
  raw.back() = p.g;
  out.next = OperatorFunction(p.grid(), std::move(raw));
  return out;
}

/// Invariants observed on one iterate P_{n+1}.
struct IterateReport {
  std::size_t index = 0;                  // n + 1
  double update = 0.0;                    // sup_t ||P_{n+1} - P_n||
  double pre_symmetrization_defect = 0.0;
  double asymmetry = 0.0;                 // max_t ||P - P^T||
  double min_eigen_ratio = 0.0;           // min_t lambda_min(P) / (1 + ||P||)
  std::optional<double> loewner_margin;   // min_t lambda_min(P_n - P_{n+1}) / (1 + ||P_n||), n >= 1
  std::optional<double> norm_increase;    // max_t (||P_{n+1}|| - ||P_n||) / (1 + ||P_n||), n >= 1
};

struct IntervalCertificate {
  std::size_t begin = 0;  // node index a
  std::size_t end = 0;    // node index tau
  double delta = 0.0;     // (tau - a) h
  double r_g = 0.0;
  double rho = 0.0;
  double contraction = 0.0;  // 4 delta M1^2 M2^2 (r_G + delta r_C) r_B
  double sup_norm = 0.0;     // ||P||_u on the window
  std::size_t iterations = 0;
  bool retried = false;
};

struct RiccatiSolution {
  std::string solver;
  OperatorFunction P;
  std::size_t iterations = 0;
  std::vector<double> history;
  double residual = 0.0;
  std::vector<IterateReport> invariant_report;
  std::vector<IntervalCertificate> intervals;
  std::vector<OperatorFunction> iterates;  // P_1, P_2, ... when requested
};

struct MonotoneOptions {
  double tol_abs = 1e-10;
  double tol_rel = 1e-8;
  std::size_t max_iter = 50;
  double hypothesis_tol = 1e-10;
  bool keep_iterates = false;
};

/// Right-hand side of the Riccati equation on [t_stop, t_tau] with terminal
/// value P(tau).
inline std::vector<Matrix> riccati_rhs(const RiccatiProblem& p, const std::vector<Matrix>& P,
                                       std::size_t tau, std::size_t stop = 0) {
  return conjugated_transport(p.backward, p.forward, P[tau], tau,
                              [&](std::size_t i) -> Matrix { return p.c[i] - P[i] * p.b[i] * P[i]; },
                              stop);
}

inline double riccati_residual(const OperatorFunction& P, const RiccatiProblem& p) {
  validate(p);
  if (!(P.grid() == p.grid()) || P.rows() != p.g.rows() || P.cols() != p.g.cols()) {
    throw InvalidInput("riccati_residual: P does not match the problem");
  }
  const TimeGrid& grid = p.grid();
  const auto rhs = conjugated_transport(p.backward, p.forward, p.g, grid.last(),
                                        [&](std::size_t i) -> Matrix {
                                          return p.c[i] - P[i] * p.b[i] * P[i];
                                        });
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, op_norm(P[i] - rhs[i]));
  return worst;
}

/// Residual at t of P(t) = V(t,tau) P(tau) U(tau,t) + int_t^tau V {C - PBP} U dr.
inline double flow_consistency(const OperatorFunction& P, const RiccatiProblem& p,
                               std::size_t t_index, std::size_t tau_index) {
  validate(p);
  if (t_index > tau_index) throw InvalidInput("flow_consistency: requires t <= tau");
  if (tau_index >= p.grid().size()) throw InvalidInput("flow_consistency: node out of range");
  if (!(P.grid() == p.grid())) throw InvalidInput("flow_consistency: grid mismatch");
  const auto w = riccati_rhs(p, P.nodes(), tau_index, t_index);
  return op_norm(P[t_index] - w[t_index]);
}

/// max over t <= tau of the flow residual, in one backward sweep.
inline double flow_consistency_sweep(const OperatorFunction& P, const RiccatiProblem& p,
                                     std::size_t tau_index) {
  validate(p);
  if (tau_index >= p.grid().size()) throw InvalidInput("flow_consistency: node out of range");
  const auto w = riccati_rhs(p, P.nodes(), tau_index);
  double worst = 0.0;
  for (std::size_t i = 0; i <= tau_index; ++i) worst = std::max(worst, op_norm(P[i] - w[i]));
  return worst;
}

/// Residual of P(t) = V(t,T) G Psi(T,t) + int_t^T V(t,r) C(r) Psi(r,t) dr.
inline double representation_check_one_sided(const OperatorFunction& P, const RiccatiProblem& p) {
  validate(p);
  if (!(P.grid() == p.grid())) throw InvalidInput("representation_check_one_sided: grid mismatch");
  const EvolutionFamily psi = closed_loop_forward(p, P);
  const auto rep = conjugated_transport(p.backward, psi, p.g, p.grid().last(),
                                        [&](std::size_t i) -> Matrix { return p.c[i]; });
  double worst = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) worst = std::max(worst, op_norm(P[i] - rep[i]));
  return worst;
}

/// Residual of P(t) = Psi_b(t,T) G Psi_f(T,t) + int_t^T Psi_b(t,r) {C + PBP} Psi_f(r,t) dr.
inline double representation_check_two_sided(const OperatorFunction& P, const RiccatiProblem& p) {
  validate(p);
  if (!(P.grid() == p.grid())) throw InvalidInput("representation_check_two_sided: grid mismatch");
  const EvolutionFamily psi_f = closed_loop_forward(p, P);
  const EvolutionFamily psi_b = closed_loop_backward(p, P);
  const auto rep = conjugated_transport(psi_b, psi_f, p.g, p.grid().last(),
                                        [&](std::size_t i) -> Matrix {
                                          return p.c[i] + P[i] * p.b[i] * P[i];
                                        });
  double worst = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) worst = std::max(worst, op_norm(P[i] - rep[i]));
  return worst;
}

namespace detail {

inline IterateReport inspect_iterate(const OperatorFunction& prev, const OperatorFunction& next,
                                     std::size_t index, double update, double defect) {
  IterateReport r;
  r.index = index;
  r.update = update;
  r.pre_symmetrization_defect = defect;
  r.min_eigen_ratio = std::numeric_limits<double>::infinity();
  const bool chain = index >= 2;
  if (chain) {
    r.loewner_margin = std::numeric_limits<double>::infinity();
    r.norm_increase = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < next.size(); ++i) {
    const double norm_next = op_norm(next[i]);
    r.asymmetry = std::max(r.asymmetry, asymmetry(next[i]));
    r.min_eigen_ratio =
        std::min(r.min_eigen_ratio, min_symmetric_eigenvalue(next[i]) / (1.0 + norm_next));
    if (chain) {
      const double norm_prev = op_norm(prev[i]);
      r.loewner_margin = std::min(
          *r.loewner_margin, min_symmetric_eigenvalue(prev[i] - next[i]) / (1.0 + norm_prev));
      r.norm_increase = std::max(*r.norm_increase, (norm_next - norm_prev) / (1.0 + norm_prev));
    }
  }
  return r;
}

}  // namespace detail

inline RiccatiSolution solve_monotone(const RiccatiProblem& p, const MonotoneOptions& opt = {}) {
  validate(p);
  if (!p.symmetric_mode) throw InvalidInput("solve_monotone: requires symmetric mode");
  const HypothesisReport hyp = check_hypotheses(p, opt.hypothesis_tol);
  if (!hyp.passed) throw HypothesisViolation("solve_monotone: " + hyp.failure, hyp.node);

  RiccatiSolution sol;
  sol.solver = "monotone";
  const TimeGrid& grid = p.grid();
  if (grid.steps() == 0) {
    sol.P = OperatorFunction(grid, {p.g});
    return sol;
  }
  OperatorFunction current = OperatorFunction::zeros(grid, p.g.rows(), p.g.cols(), false);
  for (std::size_t n = 0; n < opt.max_iter; ++n) {
    MonotoneStep step = monotone_step(current, p, opt.hypothesis_tol);
    const double diff = sup_distance(step.next, current);
    sol.history.push_back(diff);
    sol.invariant_report.push_back(detail::inspect_iterate(current, step.next, n + 1, diff,
                                                           step.pre_symmetrization_defect));
    current = std::move(step.next);
    if (opt.keep_iterates) sol.iterates.push_back(current);
    sol.iterations = n + 1;
    if (diff <= opt.tol_abs + opt.tol_rel * current.sup_norm()) {
      sol.P = std::move(current);
      sol.residual = riccati_residual(sol.P, p);
      return sol;
    }
  }
  throw NonConvergence("solve_monotone: no convergence in " + std::to_string(opt.max_iter) +
                           " iterations",
                       sol.history);
}

struct ContractionInputs {
  double m1 = 1.0;
  double m2 = 1.0;
  double r_g = 0.0;
  double r_c = 0.0;
  double r_b = 0.0;
};

/// Largest delta with 4 delta M1^2 M2^2 (r_G + delta r_C) r_B = safety, the
/// positive root of a quadratic in delta. Returns `horizon` when the
/// quadratic term vanishes identically (r_B = 0, or r_G = r_C = 0).
inline double compute_delta(const ContractionInputs& in, double safety, double horizon) {
  if (!(in.m1 > 0.0) || !(in.m2 > 0.0)) throw InvalidInput("compute_delta: M1, M2 must be positive");
  if (in.r_g < 0.0 || in.r_c < 0.0 || in.r_b < 0.0) {
    throw InvalidInput("compute_delta: norm caps must be nonnegative");
  }
  if (!(safety > 0.0 && safety < 1.0)) throw InvalidInput("compute_delta: safety must lie in (0, 1)");
  if (!(horizon >= 0.0)) throw InvalidInput("compute_delta: horizon must be nonnegative");
  const double k = 4.0 * in.m1 * in.m1 * in.m2 * in.m2 * in.r_b;
  const double lin = k * in.r_g;
  const double quad = k * in.r_c;
  if (lin == 0.0 && quad == 0.0) return horizon;
  // quad d^2 + lin d - safety = 0, cancellation-free root.
  return 2.0 * safety / (lin + std::sqrt(lin * lin + 4.0 * quad * safety));
}

inline double contraction_number(const ContractionInputs& in, double delta) {
  return 4.0 * delta * in.m1 * in.m1 * in.m2 * in.m2 * (in.r_g + delta * in.r_c) * in.r_b;
}

struct PicardOptions {
  double safety = 0.5;
  double tol_abs = 1e-13;
  double tol_rel = 1e-11;
  std::size_t max_iter = 200;
};

inline RiccatiSolution solve_picard_stepped(const RiccatiProblem& p, const PicardOptions& opt = {}) {
  validate(p);
  RiccatiSolution sol;
  sol.solver = "picard";
  const TimeGrid& grid = p.grid();
  const double h = grid.step_size();
  std::vector<Matrix> P(grid.size());
  P.back() = p.g;
  if (grid.steps() == 0) {
    sol.P = OperatorFunction(grid, std::move(P));
    return sol;
  }

  ContractionInputs in;
  in.m1 = p.forward.bound();
  in.m2 = p.backward.bound();
  in.r_c = p.c.sup_norm();
  in.r_b = p.b.sup_norm();

  std::size_t tau = grid.last();
  while (tau > 0) {
    in.r_g = op_norm(P[tau]);
    bool retried = false;
    for (;;) {
      const double delta = compute_delta(in, opt.safety, grid.horizon());
      const auto steps = static_cast<std::size_t>(std::floor(delta / h * (1.0 + 1e-12)));
      if (steps < 1) {
        throw InvalidInput("solve_picard_stepped: contraction window " + std::to_string(delta) +
                           " is shorter than the grid step " + std::to_string(h) +
                           "; use a finer grid");
      }
      const std::size_t begin = tau - std::min(steps, tau);
      IntervalCertificate cert;
      cert.begin = begin;
      cert.end = tau;
      cert.delta = static_cast<double>(tau - begin) * h;
      cert.r_g = in.r_g;
      cert.rho = 2.0 * in.m1 * in.m2 * (in.r_g + cert.delta * in.r_c);
      cert.contraction = contraction_number(in, cert.delta);
      cert.retried = retried;

      for (std::size_t i = begin; i < tau; ++i) P[i] = P[tau];
      bool escaped = false;
      bool converged = false;
      double sup = 0.0;
      for (std::size_t it = 0; it < opt.max_iter; ++it) {
        auto next = riccati_rhs(p, P, tau, begin);
        double diff = 0.0;
        sup = 0.0;
        for (std::size_t i = begin; i < tau; ++i) {
          diff = std::max(diff, op_norm(next[i] - P[i]));
          P[i] = std::move(next[i]);
          sup = std::max(sup, op_norm(P[i]));
        }
        sup = std::max(sup, op_norm(P[tau]));
        cert.iterations = it + 1;
        sol.history.push_back(diff);
        if (sup > cert.rho * (1.0 + 1e-12)) {
          escaped = true;
          break;
        }
        if (diff <= opt.tol_abs + opt.tol_rel * sup) {
          converged = true;
          break;
        }
      }
      if (escaped) {
        if (retried) {
          throw NumericalFailure("solve_picard_stepped: iterate left the contraction ball on [" +
                                     std::to_string(grid.node(begin)) + ", " +
                                     std::to_string(grid.node(tau)) + "]",
                                 begin);
        }
        // Enlarge the ball to the observed size and shrink the window.
        in.r_g = std::max(in.r_g, sup);
        retried = true;
        continue;
      }
      if (!converged) {
        throw NonConvergence("solve_picard_stepped: no convergence on window ending at node " +
                                 std::to_string(tau),
                             sol.history);
      }
      cert.sup_norm = sup;
      sol.iterations += cert.iterations;
      sol.intervals.push_back(cert);
      tau = begin;
      break;
    }
  }
  sol.P = OperatorFunction(grid, std::move(P));
  sol.residual = riccati_residual(sol.P, p);
  return sol;
}

}  // namespace mriccati
