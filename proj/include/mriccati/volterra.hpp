#pragma once

// Perturbed evolution families defined by Volterra integral equations.
//
// For a forward base family U and a bounded Q the perturbed family Psi is
// the unique solution of either
//
//   first form:   Psi(t,s) = U(t,s) + int_s^t U(t,r) Q(r) Psi(r,s) dr
//   second form:  Psi(t,s) = U(t,s) + int_s^t Psi(t,r) Q(r) U(r,s) dr
//
// (with int_t^s for backward families). A sign of -1 flips Q, which covers
// the minus-sign equations used by the linear and Riccati solvers.
//
// Each step propagator Psi(t_{i+1}, t_i) solves the adjacent-node equation
// with the trapezoid rule, implicit at the unknown endpoint. The returned
// family is therefore an exact evolution family whose values satisfy the
// full Volterra equation to O(h^2).

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mriccati/errors.hpp"
#include "mriccati/evolution.hpp"
#include "mriccati/linops.hpp"

namespace mriccati {

enum class VolterraForm {
  first,   // unknown to the right of Q
  second,  // unknown to the left of Q
};

struct PerturbationSpec {
  EvolutionFamily base;
  OperatorFunction q;
  int sign = 1;
  VolterraForm form = VolterraForm::first;

  Matrix q_at(std::size_t i) const { return sign > 0 ? q[i] : Matrix(-q[i]); }
};

namespace detail {

inline void validate(const PerturbationSpec& spec, Direction expected, const char* who) {
  if (spec.base.direction() != expected) {
    throw InvalidInput(std::string(who) + ": base family has the wrong direction");
  }
  if (spec.sign != 1 && spec.sign != -1) throw InvalidInput(std::string(who) + ": sign must be +1 or -1");
  if (!(spec.q.grid() == spec.base.grid())) {
    throw InvalidInput(std::string(who) + ": Q is not sampled on the base grid");
  }
  if (spec.q.rows() != spec.base.dimension() || spec.q.cols() != spec.base.dimension()) {
    throw InvalidInput(std::string(who) + ": Q dimension does not match the base family");
  }
}

// Returns (I + c Q) as a matrix.
inline Matrix shifted(const Matrix& q, double c) {
  Matrix m = c * q;
  m.diagonal().array() += 1.0;
  return m;
}

inline Eigen::PartialPivLU<Matrix> factor(const Matrix& m, std::size_t node, const char* who) {
  Eigen::PartialPivLU<Matrix> lu(m);
  const double rc = lu.rcond();
  if (!(rc > 64.0 * std::numeric_limits<double>::epsilon())) {
    throw NumericalFailure(std::string(who) + ": implicit trapezoid step is singular at node " +
                               std::to_string(node) + " (rcond " + std::to_string(rc) +
                               "); refine the grid",
                           node);
  }
  return lu;
}

// lhs^{-1} * rhs
inline Matrix left_solve(const Matrix& lhs, const Matrix& rhs, std::size_t node, const char* who) {
  return factor(lhs, node, who).solve(rhs);
}

// rhs * lhs^{-1}
inline Matrix right_solve(const Matrix& rhs, const Matrix& lhs, std::size_t node, const char* who) {
  return factor(lhs.transpose(), node, who).solve(rhs.transpose()).transpose();
}

}  // namespace detail

inline EvolutionFamily perturb_forward(const PerturbationSpec& spec) {
  static constexpr const char* who = "perturb_forward";
  detail::validate(spec, Direction::forward, who);
  const TimeGrid& grid = spec.base.grid();
  const double half = 0.5 * grid.step_size();
  std::vector<Matrix> steps;
  steps.reserve(grid.steps());
  Matrix q_lo = grid.steps() > 0 ? spec.q_at(0) : Matrix();
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const Matrix q_hi = spec.q_at(i + 1);
    const Matrix& s = spec.base.step(i);
    if (spec.form == VolterraForm::first) {
      // (I - h/2 Q_{i+1}) Psi = S (I + h/2 Q_i)
      steps.push_back(detail::left_solve(detail::shifted(q_hi, -half),
                                         s * detail::shifted(q_lo, half), i + 1, who));
    } else {
      // Psi (I - h/2 Q_i) = (I + h/2 Q_{i+1}) S
      steps.push_back(detail::right_solve(detail::shifted(q_hi, half) * s,
                                          detail::shifted(q_lo, -half), i, who));
    }
    q_lo = q_hi;
  }
  return EvolutionFamily(grid, Direction::forward, std::move(steps), spec.base.dimension());
}

inline EvolutionFamily perturb_backward(const PerturbationSpec& spec) {
  static constexpr const char* who = "perturb_backward";
  detail::validate(spec, Direction::backward, who);
  const TimeGrid& grid = spec.base.grid();
  const double half = 0.5 * grid.step_size();
  std::vector<Matrix> steps;
  steps.reserve(grid.steps());
  Matrix q_lo = grid.steps() > 0 ? spec.q_at(0) : Matrix();
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const Matrix q_hi = spec.q_at(i + 1);
    const Matrix& s = spec.base.step(i);
    if (spec.form == VolterraForm::first) {
      // (I - h/2 Q_i) Psi = S (I + h/2 Q_{i+1})
      steps.push_back(detail::left_solve(detail::shifted(q_lo, -half),
                                         s * detail::shifted(q_hi, half), i, who));
    } else {
      // Psi (I - h/2 Q_{i+1}) = (I + h/2 Q_i) S
      steps.push_back(detail::right_solve(detail::shifted(q_lo, half) * s,
                                          detail::shifted(q_hi, -half), i + 1, who));
    }
    q_lo = q_hi;
  }
  return EvolutionFamily(grid, Direction::backward, std::move(steps), spec.base.dimension());
}

inline EvolutionFamily perturb(const PerturbationSpec& spec) {
  return spec.base.direction() == Direction::forward ? perturb_forward(spec)
                                                     : perturb_backward(spec);
}

/// Residual of the selected Volterra form for the pairs anchored at node
/// `anchor` (s for forward families, s as the right endpoint for backward
/// ones), evaluated with the composite trapezoid rule. Returns the max over
/// the free endpoint.
inline double volterra_residual(const EvolutionFamily& psi, const PerturbationSpec& spec,
                                std::size_t anchor) {
  const TimeGrid& grid = spec.base.grid();
  if (!(psi.grid() == grid) || psi.direction() != spec.base.direction()) {
    throw InvalidInput("volterra_residual: family does not match the perturbation data");
  }
  if (anchor >= grid.size()) throw InvalidInput("volterra_residual: anchor out of range");
  const double h = grid.step_size();
  const Eigen::Index n = spec.base.dimension();
  double worst = 0.0;
  Matrix u = Matrix::Identity(n, n);
  Matrix p = Matrix::Identity(n, n);
  Matrix acc = Matrix::Zero(n, n);
  // The integrand at r = free endpoint is Q * Psi (first) or Q * U (second);
  // the accumulated integral is transported by U (first) or Psi (second).
  auto integrand = [&](std::size_t r, const Matrix& u_r, const Matrix& p_r) -> Matrix {
    return spec.form == VolterraForm::first ? Matrix(spec.q_at(r) * p_r)
                                            : Matrix(spec.q_at(r) * u_r);
  };
  if (spec.base.direction() == Direction::forward) {
    for (std::size_t t = anchor; t < grid.steps(); ++t) {
      const Matrix& transport = spec.form == VolterraForm::first ? spec.base.step(t) : psi.step(t);
      const Matrix f_lo = integrand(t, u, p);
      u = spec.base.step(t) * u;
      p = psi.step(t) * p;
      const Matrix f_hi = integrand(t + 1, u, p);
      acc = transport * (acc + 0.5 * h * f_lo);
      const Matrix total = acc + 0.5 * h * f_hi;
      worst = std::max(worst, op_norm(p - u - total));
      acc += 0.5 * h * f_hi;
    }
  } else {
    for (std::size_t t = anchor; t > 0; --t) {
      const Matrix& transport =
          spec.form == VolterraForm::first ? spec.base.step(t - 1) : psi.step(t - 1);
      const Matrix f_hi = integrand(t, u, p);
      u = spec.base.step(t - 1) * u;
      p = psi.step(t - 1) * p;
      const Matrix f_lo = integrand(t - 1, u, p);
      acc = transport * (acc + 0.5 * h * f_hi);
      worst = std::max(worst, op_norm(p - u - (acc + 0.5 * h * f_lo)));
      acc += 0.5 * h * f_lo;
    }
  }
  return worst;
}

/// Full composite-trapezoid march of the first form for a forward family,
/// column by column in increasing t with s fixed. Returns Psi(t_k, t_s) for
/// k = s..N. O(N^2) work per column; used as an independent route.
inline std::vector<Matrix> march_first_form(const PerturbationSpec& spec, std::size_t s) {
  detail::validate(spec, Direction::forward, "march_first_form");
  const TimeGrid& grid = spec.base.grid();
  if (s >= grid.size()) throw InvalidInput("march_first_form: node out of range");
  const double h = grid.step_size();
  const Eigen::Index n = spec.base.dimension();
  std::vector<Matrix> psi{Matrix::Identity(n, n)};
  std::vector<Matrix> transport{Matrix::Identity(n, n)};  // U(t_k, t_m), m = s..k
  for (std::size_t k = s + 1; k < grid.size(); ++k) {
    for (auto& m : transport) m = spec.base.step(k - 1) * m;
    transport.push_back(Matrix::Identity(n, n));
    Matrix rhs = transport.front();
    for (std::size_t m = s; m < k; ++m) {
      const double w = m == s ? 0.5 * h : h;
      rhs += w * transport[m - s] * spec.q_at(m) * psi[m - s];
    }
    psi.push_back(detail::left_solve(detail::shifted(spec.q_at(k), -0.5 * h), rhs, k,
                                     "march_first_form"));
  }
  return psi;
}

/// Second-form march for a forward family with t fixed and s decreasing.
/// Returns Psi(t_t, t_j) for j = t, t-1, ..., 0 (index 0 is j = t).
inline std::vector<Matrix> march_second_form(const PerturbationSpec& spec, std::size_t t) {
  detail::validate(spec, Direction::forward, "march_second_form");
  const TimeGrid& grid = spec.base.grid();
  if (t >= grid.size()) throw InvalidInput("march_second_form: node out of range");
  const double h = grid.step_size();
  const Eigen::Index n = spec.base.dimension();
  std::vector<Matrix> psi{Matrix::Identity(n, n)};
  std::vector<Matrix> transport{Matrix::Identity(n, n)};  // U(t_m, t_j), m = t, t-1, ..., j
  for (std::size_t j = t; j-- > 0;) {
    for (auto& m : transport) m = m * spec.base.step(j);
    transport.push_back(Matrix::Identity(n, n));
    // transport[k] = U(t_{t-k}, t_j); psi[k] = Psi(t_t, t_{t-k})
    Matrix rhs = transport.front();
    for (std::size_t k = 0; k + 1 < transport.size(); ++k) {
      const double w = k == 0 ? 0.5 * h : h;
      rhs += w * psi[k] * spec.q_at(t - k) * transport[k];
    }
    psi.push_back(detail::right_solve(rhs, detail::shifted(spec.q_at(j), -0.5 * h), j,
                                      "march_second_form"));
  }
  return psi;
}

/// max over sampled grid pairs of ||Psi_first - Psi_second||.
inline double cross_form_check(const EvolutionFamily& base, const OperatorFunction& q, int sign,
                               std::size_t max_pairs = kDefaultBoundPairs) {
  PerturbationSpec spec{base, q, sign, VolterraForm::first};
  const EvolutionFamily a = perturb(spec);
  spec.form = VolterraForm::second;
  const EvolutionFamily b = perturb(spec);
  const TimeGrid& grid = base.grid();
  const std::size_t nodes = grid.size();
  const std::size_t anchors = std::clamp<std::size_t>(max_pairs / nodes, 1, nodes);
  const std::size_t stride = std::max<std::size_t>(1, nodes / anchors);
  const Eigen::Index n = base.dimension();
  double worst = 0.0;
  for (std::size_t anchor = 0; anchor < nodes; anchor += stride) {
    Matrix va = Matrix::Identity(n, n);
    Matrix vb = Matrix::Identity(n, n);
    if (base.direction() == Direction::forward) {
      for (std::size_t k = anchor; k < grid.steps(); ++k) {
        va = a.step(k) * va;
        vb = b.step(k) * vb;
        worst = std::max(worst, op_norm(va - vb));
      }
    } else {
      for (std::size_t k = anchor; k > 0; --k) {
        va = a.step(k - 1) * va;
        vb = b.step(k - 1) * vb;
        worst = std::max(worst, op_norm(va - vb));
      }
    }
  }
  return worst;
}

/// Gronwall-type majorant M_U exp(M_U M_Q (t - s)) * driving(t).
struct GronwallBound {
  double m_u = 1.0;
  double m_q = 0.0;

  double factor(double elapsed) const { return m_u * std::exp(m_u * m_q * elapsed); }
};

struct DependenceGap {
  double sup_gap = 0.0;       // sup_t ||(Psi_n(t,s) - Psi(t,s)) x||
  double sup_majorant = 0.0;  // sup_t of the Gronwall majorant
  double worst_excess = 0.0;  // max_t (gap - majorant), <= slack when dominated
  bool dominated = false;
  std::vector<double> gap;       // per node t >= s
  std::vector<double> majorant;  // per node t >= s
};

/// For a forward base family and first-form perturbations Q_n -> Q, compares
/// Psi_n(., s) x against Psi(., s) x and the Gronwall majorant built from
/// int_s^t ||(Q_n - Q)(r) Psi(r, s) x|| dr (trapezoid rule).
inline std::vector<DependenceGap> continuous_dependence_gap(
    const EvolutionFamily& base, const std::vector<OperatorFunction>& q_seq,
    const OperatorFunction& q_limit, const Vector& x, std::size_t s, double slack = -1.0) {
  if (base.direction() != Direction::forward) {
    throw InvalidInput("continuous_dependence_gap: base must be forward");
  }
  if (x.size() != base.dimension()) throw InvalidInput("continuous_dependence_gap: dimension mismatch");
  const TimeGrid& grid = base.grid();
  if (s >= grid.size()) throw InvalidInput("continuous_dependence_gap: node out of range");
  const double h = grid.step_size();
  if (slack < 0.0) slack = 10.0 * h * h * (1.0 + x.norm());

  GronwallBound gb;
  gb.m_u = base.bound();
  gb.m_q = q_limit.sup_norm();
  for (const auto& q : q_seq) {
    if (!(q.grid() == grid) || q.rows() != base.dimension() || q.cols() != base.dimension()) {
      throw InvalidInput("continuous_dependence_gap: dimension mismatch");
    }
    gb.m_q = std::max(gb.m_q, q.sup_norm());
  }

  const EvolutionFamily psi = perturb_forward({base, q_limit, 1, VolterraForm::first});
  std::vector<Vector> psi_x{x};
  for (std::size_t k = s; k < grid.steps(); ++k) psi_x.push_back(psi.step(k) * psi_x.back());

  std::vector<DependenceGap> out;
  out.reserve(q_seq.size());
  for (const auto& qn : q_seq) {
    const EvolutionFamily psi_n = perturb_forward({base, qn, 1, VolterraForm::first});
    DependenceGap g;
    Vector yn = x;
    double driving = 0.0;
    double prev_integrand = ((qn[s] - q_limit[s]) * psi_x[0]).norm();
    for (std::size_t k = s; k < grid.size(); ++k) {
      if (k > s) {
        yn = psi_n.step(k - 1) * yn;
        const double cur = ((qn[k] - q_limit[k]) * psi_x[k - s]).norm();
        driving += 0.5 * h * (prev_integrand + cur);
        prev_integrand = cur;
      }
      const double gap = (yn - psi_x[k - s]).norm();
      const double maj = gb.factor(grid.node(k) - grid.node(s)) * driving;
      g.gap.push_back(gap);
      g.majorant.push_back(maj);
      g.sup_gap = std::max(g.sup_gap, gap);
      g.sup_majorant = std::max(g.sup_majorant, maj);
      g.worst_excess = std::max(g.worst_excess, gap - maj);
    }
    g.dominated = g.worst_excess <= slack;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace mriccati
