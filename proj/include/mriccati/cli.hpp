#pragma once

// Subcommands behind the `mriccati` executable. Each returns a process exit
// code and writes human-readable output to `out`:
//   0 success, 1 check failed, 2 invalid input, 3 non-convergence,
//   4 hypothesis violation in symmetric mode.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mriccati/errors.hpp"
#include "mriccati/lqr_demo.hpp"
#include "mriccati/oracle.hpp"
#include "mriccati/problem_io.hpp"
#include "mriccati/riccati.hpp"

namespace mriccati::cli {

inline constexpr const char* kVersion = "mriccati 1.0.0";

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kInvalidInput = 2,
  kNonConvergence = 3,
  kHypothesisViolation = 4,
};

struct Options {
  std::optional<double> tol_abs;
  std::optional<double> tol_rel;
  std::optional<std::size_t> max_iter;
  std::optional<double> safety;
  std::optional<std::string> solver;
  std::string out_dir;  // empty: no files written
  std::optional<double> threshold;
  std::vector<std::size_t> grids;
  std::vector<double> x0;
};

using json = nlohmann::json;

inline io::ProblemFile load(const std::string& path, const Options& opt) {
  io::ProblemFile f = io::read_problem(path);
  if (opt.tol_abs) f.tol_abs = *opt.tol_abs;
  if (opt.tol_rel) f.tol_rel = *opt.tol_rel;
  if (opt.max_iter) f.max_iter = *opt.max_iter;
  if (opt.safety) f.safety = *opt.safety;
  if (opt.solver) f.solver = io::parse_solver(*opt.solver);
  if (f.tol_abs < 0.0 || f.tol_rel < 0.0) throw InvalidInput("tolerances must be nonnegative");
  if (!(f.safety > 0.0 && f.safety < 1.0)) throw InvalidInput("safety must lie in (0, 1)");
  return f;
}

inline json vector_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

inline json solution_json(const RiccatiSolution& s) {
  json j;
  j["solver"] = s.solver;
  j["iterations"] = s.iterations;
  j["history"] = vector_json(s.history);
  j["residual"] = s.residual;
  json inv = json::array();
  for (const auto& r : s.invariant_report) {
    json e{{"iterate", r.index},
           {"update", r.update},
           {"pre_symmetrization_defect", r.pre_symmetrization_defect},
           {"asymmetry", r.asymmetry},
           {"min_eigen_ratio", r.min_eigen_ratio}};
    e["loewner_margin"] = r.loewner_margin ? json(*r.loewner_margin) : json(nullptr);
    e["norm_increase"] = r.norm_increase ? json(*r.norm_increase) : json(nullptr);
    inv.push_back(std::move(e));
  }
  j["invariants"] = inv;
  json iv = json::array();
  for (const auto& c : s.intervals) {
    iv.push_back({{"begin", c.begin},
                  {"end", c.end},
                  {"delta", c.delta},
                  {"r_G", c.r_g},
                  {"rho", c.rho},
                  {"contraction", c.contraction},
                  {"sup_norm", c.sup_norm},
                  {"iterations", c.iterations},
                  {"retried", c.retried}});
  }
  j["intervals"] = iv;
  return j;
}

inline json hypotheses_json(const HypothesisReport& h) {
  json j{{"passed", h.passed}, {"duality_residual", h.duality_residual}};
  if (!h.passed) j["failure"] = h.failure;
  j["node"] = h.node ? json(*h.node) : json(nullptr);
  return j;
}

/// Runs the selected solver. The oracle needs a generator.
inline RiccatiSolution run_solver(const io::ProblemFile& f, const RiccatiProblem& p) {
  switch (f.solver) {
    case io::SolverKind::monotone: {
      MonotoneOptions mo;
      mo.tol_abs = f.tol_abs;
      mo.tol_rel = f.tol_rel;
      mo.max_iter = f.max_iter;
      return solve_monotone(p, mo);
    }
    case io::SolverKind::picard: {
      PicardOptions po;
      po.safety = f.safety;
      po.max_iter = std::max<std::size_t>(f.max_iter, 200);
      return solve_picard_stepped(p, po);
    }
    case io::SolverKind::oracle: {
      if (!p.generator) throw InvalidInput("oracle: the problem must specify a generator 'A'");
      OdeSolveReport r = solve_differential_riccati(*p.generator, p.b, p.c, p.g);
      RiccatiSolution s;
      s.solver = "oracle";
      s.P = std::move(r.P_oracle);
      s.residual = riccati_residual(s.P, p);
      return s;
    }
  }
  throw InvalidInput("unknown solver");
}

/// Maps library exceptions to exit codes.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const HypothesisViolation& e) {
    err << "hypothesis violation: " << e.what() << '\n';
    return kHypothesisViolation;
  } catch (const NonConvergence& e) {
    err << "non-convergence: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const nlohmann::json::exception& e) {
    err << "invalid input: " << e.what() << '\n';
    return kInvalidInput;
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline int solve_impl(const std::string& problem_path, const Options& opt, std::ostream& out,
                      std::optional<io::SolverKind> forced) {
  io::ProblemFile f = load(problem_path, opt);
  if (forced) f.solver = *forced;
  const RiccatiProblem p = io::build_problem(f);
  const HypothesisReport hyp = check_hypotheses(p);
  if (f.solver == io::SolverKind::monotone && !hyp.passed) {
    out << "hypothesis violation: " << hyp.failure;
    if (hyp.node) out << " (node " << *hyp.node << ")";
    out << "\n";
    return kHypothesisViolation;
  }
  const auto start = std::chrono::steady_clock::now();
  const RiccatiSolution s = run_solver(f, p);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  out << "solver     " << s.solver << "\n"
      << "iterations " << s.iterations << "\n"
      << "residual   " << io::format_double(s.residual) << "\n"
      << "P(0)[0,0]  " << io::format_double(s.P[0](0, 0)) << "\n";

  if (!opt.out_dir.empty()) {
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    const auto csv = dir / "solution.csv";
    const auto diag = dir / "diagnostics.json";
    io::write_solution_csv(csv.string(), s.P);
    json record = solution_json(s);
    record["version"] = kVersion;
    record["problem"] = problem_path;
    record["symmetric_mode"] = p.symmetric_mode;
    record["hypotheses"] = hypotheses_json(hyp);
    record["wall_time_s"] = wall;
    record["grid"] = {{"horizon", p.grid().horizon()}, {"steps", p.grid().steps()}};
    record["outputs"] = {{"solution", csv.string()}, {"diagnostics", diag.string()}};
    write_json(diag, record);
    out << "wrote      " << csv.string() << "\n";
  }
  return kOk;
}

inline int cmd_solve(const std::string& problem_path, const Options& opt, std::ostream& out) {
  return guarded(out, [&]() -> int { return solve_impl(problem_path, opt, out, std::nullopt); });
}

inline int cmd_oracle(const std::string& problem_path, const Options& opt, std::ostream& out) {
  return guarded(out, [&]() -> int { return solve_impl(problem_path, opt, out, io::SolverKind::oracle); });
}

struct CheckReport {
  double riccati = 0.0;
  double flow = 0.0;
  double one_sided = 0.0;
  double two_sided = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

/// Generator size estimate max_i ||S_i - I|| / h when only steps are known.
inline double generator_scale(const RiccatiProblem& p) {
  if (p.generator) return p.generator->sup_norm();
  const double h = p.grid().step_size();
  double s = 0.0;
  for (const auto& step : p.forward.steps()) {
    s = std::max(s, op_norm(step - Matrix::Identity(step.rows(), step.cols())) / h);
  }
  return s;
}

inline CheckReport check_solution(const RiccatiProblem& p, const OperatorFunction& P,
                                  std::optional<double> threshold) {
  CheckReport r;
  r.riccati = riccati_residual(P, p);
  const std::size_t last = p.grid().last();
  // tau on eight evenly spaced nodes; each sweep covers every t <= tau.
  for (std::size_t k = 1; k <= 8; ++k) {
    const std::size_t tau = (last * k) / 8;
    r.flow = std::max(r.flow, flow_consistency_sweep(P, p, tau));
  }
  r.one_sided = representation_check_one_sided(P, p);
  r.two_sided = representation_check_two_sided(P, p);
  if (threshold) {
    r.threshold = *threshold;
  } else {
    const double h = p.grid().step_size();
    const double a = 1.0 + generator_scale(p);
    r.threshold = 50.0 * h * h * (1.0 + P.sup_norm()) * a * a + 1e-10;
  }
  r.passed = r.riccati <= r.threshold && r.flow <= r.threshold && r.one_sided <= r.threshold &&
             r.two_sided <= r.threshold;
  return r;
}

inline int cmd_check(const std::string& problem_path, const std::string& solution_path,
                     const Options& opt, std::ostream& out) {
  return guarded(out, [&]() -> int {
    const io::ProblemFile f = load(problem_path, opt);
    const RiccatiProblem p = io::build_problem(f);
    const OperatorFunction P = io::read_solution_csv(solution_path, p.grid(), f.dimension);
    const CheckReport r = check_solution(p, P, opt.threshold);
    out << "riccati_residual   " << io::format_double(r.riccati) << "\n"
        << "flow_consistency   " << io::format_double(r.flow) << "\n"
        << "representation_1   " << io::format_double(r.one_sided) << "\n"
        << "representation_2   " << io::format_double(r.two_sided) << "\n"
        << "threshold          " << io::format_double(r.threshold) << "\n"
        << (r.passed ? "PASS" : "FAIL") << "\n";
    return r.passed ? kOk : kCheckFailed;
  });
}

struct StudyRow {
  std::size_t steps = 0;
  double h = 0.0;
  double error = 0.0;
};

struct StudyResult {
  std::size_t reference_steps = 0;
  std::vector<StudyRow> rows;
  std::optional<double> order;  // least-squares slope of log error against log h
};

inline std::optional<double> fitted_order(const std::vector<StudyRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = 0;
  for (const auto& r : rows) {
    if (!(r.error > 0.0)) return std::nullopt;
    const double x = std::log(r.h), y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2 || den == 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / den;
}

/// Error of the configured solver on each grid against the RK4 oracle on a
/// reference grid twice as fine as the finest requested one.
inline StudyResult run_study(const io::ProblemFile& base, std::vector<std::size_t> grids) {
  if (grids.size() < 3) throw InvalidInput("study: needs at least three grid sizes");
  if (!base.a) throw InvalidInput("study: the oracle needs a generator 'A'");
  std::sort(grids.begin(), grids.end());
  if (grids.front() < 1) throw InvalidInput("study: grid sizes must be positive");
  StudyResult out;
  out.reference_steps = 2 * grids.back();
  for (std::size_t n : grids) {
    if (out.reference_steps % n != 0) {
      throw InvalidInput("study: every grid size must divide " + std::to_string(out.reference_steps));
    }
  }
  io::ProblemFile ref = base;
  ref.steps = out.reference_steps;
  const RiccatiProblem ref_problem = io::build_problem(ref);
  const OdeSolveReport oracle =
      solve_differential_riccati(*ref_problem.generator, ref_problem.b, ref_problem.c, ref_problem.g);

  std::vector<std::future<StudyRow>> jobs;
  for (std::size_t n : grids) {
    jobs.push_back(std::async(std::launch::async, [&, n] {
      io::ProblemFile f = base;
      f.steps = n;
      const RiccatiProblem p = io::build_problem(f);
      if (f.solver == io::SolverKind::monotone && !p.symmetric_mode) f.solver = io::SolverKind::picard;
      const RiccatiSolution s = run_solver(f, p);
      const std::size_t stride = out.reference_steps / n;
      double err = 0.0;
      for (std::size_t i = 0; i < s.P.size(); ++i) {
        err = std::max(err, op_norm(s.P[i] - oracle.P_oracle[i * stride]));
      }
      return StudyRow{n, p.grid().step_size(), err};
    }));
  }
  for (auto& j : jobs) out.rows.push_back(j.get());
  out.order = fitted_order(out.rows);
  return out;
}

inline int cmd_study(const std::string& problem_path, const Options& opt, std::ostream& out) {
  return guarded(out, [&]() -> int {
    const io::ProblemFile f = load(problem_path, opt);
    const StudyResult r = run_study(f, opt.grids);
    out << std::setw(8) << "N" << std::setw(16) << "h" << std::setw(24) << "sup error" << "\n";
    for (const auto& row : r.rows) {
      out << std::setw(8) << row.steps << std::setw(16) << row.h << std::setw(24)
          << io::format_double(row.error) << "\n";
    }
    out << "fitted order " << (r.order ? io::format_double(*r.order) : std::string("n/a")) << "\n";
    if (!opt.out_dir.empty()) {
      std::filesystem::create_directories(opt.out_dir);
      json rows = json::array();
      for (const auto& row : r.rows) rows.push_back({{"steps", row.steps}, {"h", row.h}, {"error", row.error}});
      write_json(std::filesystem::path(opt.out_dir) / "study.json",
                 {{"version", kVersion},
                  {"problem", problem_path},
                  {"reference_steps", r.reference_steps},
                  {"rows", rows},
                  {"order", r.order ? json(*r.order) : json(nullptr)}});
    }
    return kOk;
  });
}

inline int cmd_lqr_demo(const std::string& problem_path, const Options& opt, std::ostream& out) {
  return guarded(out, [&]() -> int {
    io::ProblemFile f = load(problem_path, opt);
    if (!f.b_factor) throw InvalidInput("lqr-demo: the problem must supply 'B_factor'");
    if (!f.a) throw InvalidInput("lqr-demo: the problem must supply a generator 'A'");
    if (static_cast<Eigen::Index>(opt.x0.size()) != f.dimension) {
      throw InvalidInput("lqr-demo: --x0 needs " + std::to_string(f.dimension) + " entries");
    }
    const RiccatiProblem p = io::build_problem(f);
    if (!p.symmetric_mode) {
      out << "hypothesis violation: " << check_hypotheses(p).failure << "\n";
      return static_cast<int>(kHypothesisViolation);
    }
    const RiccatiSolution s = run_solver(f, p);
    const Vector x0 = Eigen::Map<const Vector>(opt.x0.data(), static_cast<Eigen::Index>(opt.x0.size()));
    const LqrReport r = lqr_demo(f, s.P, x0);
    out << "predicted <P(0)x0,x0> " << io::format_double(r.predicted) << "\n"
        << "realized cost         " << io::format_double(r.cost) << "\n";
    double best = r.cost;
    for (double c : r.perturbed_costs) best = std::min(best, c);
    out << "best perturbed cost   " << io::format_double(best) << "\n"
        << "cost matches          " << (r.cost_matches ? "yes" : "no") << "\n"
        << "no better control     " << (r.no_better_control ? "yes" : "no") << "\n";
    if (!opt.out_dir.empty()) {
      std::filesystem::create_directories(opt.out_dir);
      write_json(std::filesystem::path(opt.out_dir) / "lqr.json",
                 {{"version", kVersion},
                  {"problem", problem_path},
                  {"predicted", r.predicted},
                  {"cost", r.cost},
                  {"tol", r.tol},
                  {"perturbed_costs", vector_json(r.perturbed_costs)},
                  {"cost_matches", r.cost_matches},
                  {"no_better_control", r.no_better_control}});
    }
    return (r.cost_matches && r.no_better_control) ? kOk : kCheckFailed;
  });
}

}  // namespace mriccati::cli
