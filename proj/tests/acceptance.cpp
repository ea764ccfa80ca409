// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "mriccati/cli.hpp"
#include "mriccati/mriccati.hpp"
#include "test_support.hpp"

namespace {

using namespace mriccati;
using namespace mriccati::testing;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %d %-28s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Converged solutions on the random problem set, shared by several criteria.
struct Case {
  Eigen::Index n = 0;
  SampledProblem sp;
  RiccatiSolution mono;
  double oracle_gap = 0.0;
  double order = 0.0;
};

constexpr std::size_t kSteps = 1000;
constexpr int kCases = 20;

double fitted_slope(const std::vector<double>& h, const std::vector<double>& e) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]), y = std::log(e[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

void closed_forms() {
  struct Item {
    const char* label;
    double c, g, expected;
  };
  const Item items[] = {{"tanh(1)", 1.0, 0.0, std::tanh(1.0)}, {"1/2", 0.0, 1.0, 0.5}};
  bool ok = true;
  std::string detail;
  for (const auto& it : items) {
    const auto t0 = Clock::now();
    const SampledProblem s = scalar_problem(it.c, it.g, 1.0, 2000);
    const RiccatiSolution sol = solve_monotone(s.problem);
    const double secs = seconds_since(t0);
    const double err = std::abs(sol.P[0](0, 0) - it.expected);
    ok = ok && err <= 1e-6 && secs <= 2.0;
    detail += std::string(it.label) + fmt(": err %.2e", err) + fmt(" in %.3fs  ", secs);
  }
  report(1, "closed-form scalar cases", ok, detail);
}

std::vector<Case> oracle_equivalence() {
  const auto t0 = Clock::now();
  const Eigen::Index dims[] = {2, 4, 8};
  std::vector<Case> cases;
  double worst_gap = 0.0;
  double worst_order = 1e300;
  for (int k = 0; k < kCases; ++k) {
    Case c;
    c.n = dims[k % 3];
    const RandomProblemData d = random_problem_data(c.n, 1000 + static_cast<std::uint64_t>(k));
    std::vector<double> hs, gaps;
    for (std::size_t steps : {kSteps, 2 * kSteps}) {
      SampledProblem sp = sample_problem(d, 1.0, steps);
      MonotoneOptions opt;
      opt.keep_iterates = steps == kSteps;
      RiccatiSolution sol = solve_monotone(sp.problem, opt);
      const OdeSolveReport ode = solve_differential_riccati(sp.a, sp.problem.b, sp.problem.c, sp.problem.g);
      hs.push_back(sp.problem.grid().step_size());
      gaps.push_back(compare(sol.P, ode));
      if (steps == kSteps) {
        c.sp = std::move(sp);
        c.mono = std::move(sol);
      }
    }
    c.oracle_gap = gaps.front();
    c.order = fitted_slope(hs, gaps);
    worst_gap = std::max(worst_gap, c.oracle_gap);
    worst_order = std::min(worst_order, c.order);
    cases.push_back(std::move(c));
  }
  const double secs = seconds_since(t0);
  report(2, "ODE oracle equivalence", worst_gap <= 1e-4 && worst_order >= 1.8 && secs <= 60.0,
         fmt("max gap %.2e", worst_gap) + fmt("  min order %.3f", worst_order) +
             fmt("  %.1fs", secs));
  return cases;
}

void iterate_invariants(const std::vector<Case>& cases) {
  bool ok = true;
  double sym = 0.0, eig = 1e300, chain = 1e300;
  std::size_t iterates = 0;
  for (const auto& c : cases) {
    const auto& its = c.mono.iterates;
    for (std::size_t k = 0; k < its.size(); ++k) {
      const OperatorFunction& P = its[k];
      for (std::size_t i = 0; i < P.size(); ++i) {
        const double norm = op_norm(P[i]);
        const double a = asymmetry(P[i]);
        const double lo = min_symmetric_eigenvalue(P[i]);
        sym = std::max(sym, a);
        eig = std::min(eig, lo / (1.0 + norm));
        ok = ok && a <= 1e-10 && lo >= -1e-8 * (1.0 + norm);
        // P_1 >= P_2 >= ...
        if (k >= 1) {
          const double gap = min_symmetric_eigenvalue(symmetrize(its[k - 1][i] - P[i]));
          const double slack = 1e-9 * (1.0 + op_norm(its[k - 1][i]));
          chain = std::min(chain, gap / slack);
          ok = ok && gap >= -slack;
        }
      }
      ++iterates;
    }
    // The raw update before symmetrization must already be symmetric.
    for (const auto& r : c.mono.invariant_report) {
      sym = std::max(sym, r.pre_symmetrization_defect);
      ok = ok && r.pre_symmetrization_defect <= 1e-10;
    }
  }
  report(3, "iterate invariants", ok,
         std::to_string(iterates) + " iterates" + fmt("  max asym %.1e", sym) +
             fmt("  min eig/(1+|P|) %.2e", eig) + fmt("  min chain margin/slack %.2e", chain));
}

void cross_solver(const std::vector<Case>& cases) {
  bool ok = true;
  double worst = 0.0, worst_contraction = 0.0;
  int compared = 0, skipped = 0;
  std::size_t windows = 0;
  for (const auto& c : cases) {
    const RiccatiProblem& p = c.sp.problem;
    ContractionInputs in;
    in.m1 = p.forward.bound();
    in.m2 = p.backward.bound();
    in.r_g = op_norm(p.g);
    in.r_c = p.c.sup_norm();
    in.r_b = p.b.sup_norm();
    if (compute_delta(in, 0.5, p.grid().horizon()) < p.grid().step_size()) {
      ++skipped;
      continue;
    }
    const RiccatiSolution pic = solve_picard_stepped(p);
    for (const auto& w : pic.intervals) {
      worst_contraction = std::max(worst_contraction, w.contraction);
      ok = ok && w.contraction < 1.0 && w.sup_norm <= w.rho * (1.0 + 1e-12);
    }
    windows += pic.intervals.size();
    const double gap = sup_distance(pic.P, c.mono.P);
    worst = std::max(worst, gap);
    ok = ok && gap <= 1e-6;
    ++compared;
  }
  report(4, "Picard vs monotone", ok && compared > 0,
         std::to_string(compared) + " compared, " + std::to_string(skipped) + " skipped" +
             fmt("  max gap %.2e", worst) + "  " + std::to_string(windows) + " windows" +
             fmt("  max contraction %.4f", worst_contraction));
}

// Quadrature constant: largest err / h^2 over the tanh refinement.
double tanh_constant() {
  double k = 0.0;
  for (std::size_t steps : {250, 500, 1000, 2000}) {
    const SampledProblem s = scalar_problem(1.0, 0.0, 1.0, steps);
    const RiccatiSolution sol = solve_monotone(s.problem);
    const double h = s.problem.grid().step_size();
    k = std::max(k, scalar_error(sol.P, tanh_solution) / (h * h));
  }
  return k;
}

void representations(const std::vector<Case>& cases, double k) {
  const double h = 1.0 / static_cast<double>(kSteps);
  const double bound = 10.0 * k * h * h;
  double one = 0.0, two = 0.0;
  for (const auto& c : cases) {
    one = std::max(one, representation_check_one_sided(c.mono.P, c.sp.problem));
    two = std::max(two, representation_check_two_sided(c.mono.P, c.sp.problem));
  }
  report(5, "representation residuals", one <= bound && two <= bound,
         fmt("C %.3f", k) + fmt("  bound %.2e", bound) + fmt("  one-sided %.2e", one) +
             fmt("  two-sided %.2e", two));
}

void volterra_forms() {
  constexpr std::size_t steps = 200;
  const TimeGrid grid(1.0, steps);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Eigen::Index n, double scale) {
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) m(i, j) = normal(rng) * scale / std::sqrt(double(n));
    return m;
  };
  double worst_cross = 0.0, worst_excess = 0.0, worst_gap = 0.0;
  bool dominated = true;
  for (Eigen::Index n : {1, 2, 4}) {
    const auto a = OperatorFunction::constant(grid, draw(n, 0.8), true);
    const EvolutionFamily fwd = build_forward_family(a);
    const EvolutionFamily bwd = adjoint_backward_family(fwd);
    const auto q = OperatorFunction::constant(grid, draw(n, 0.8), false);
    for (int sign : {1, -1}) {
      worst_cross = std::max(worst_cross, cross_form_check(fwd, q, sign));
      worst_cross = std::max(worst_cross, cross_form_check(bwd, q, sign));
    }
    // Q_k = Q + E / k converges to Q; the gap must stay under the majorant.
    const Matrix e = draw(n, 1.0);
    std::vector<OperatorFunction> seq;
    for (int kk = 1; kk <= 5; ++kk) seq.push_back(OperatorFunction::constant(grid, q[0] + e / kk, false));
    Vector x = Vector::Ones(n);
    for (std::size_t s : {std::size_t{0}, steps / 3}) {
      for (const auto& g : continuous_dependence_gap(fwd, seq, q, x, s)) {
        dominated = dominated && g.dominated;
        worst_excess = std::max(worst_excess, g.worst_excess);
        worst_gap = std::max(worst_gap, g.sup_gap);
      }
    }
  }
  report(6, "Volterra forms and Gronwall", worst_cross <= 1e-4 && dominated,
         fmt("max cross-form %.2e", worst_cross) + fmt("  max gap %.2e", worst_gap) +
             fmt("  max gap - majorant %.2e", worst_excess));
}

void flow_identity(const std::vector<Case>& cases, double k) {
  const double h = 1.0 / static_cast<double>(kSteps);
  const double bound = 10.0 * k * h * h;
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<std::size_t> node(0, kSteps);
  double worst = 0.0;
  for (const auto& c : cases) {
    for (int r = 0; r < 100; ++r) {
      std::size_t t = node(rng), tau = node(rng);
      if (t > tau) std::swap(t, tau);
      worst = std::max(worst, flow_consistency(c.mono.P, c.sp.problem, t, tau));
    }
  }
  report(7, "flow identity", worst <= bound,
         std::to_string(100 * cases.size()) + " pairs" + fmt("  bound %.2e", bound) +
             fmt("  max %.2e", worst));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("mriccati_accept_" + std::to_string(::getpid()));
  bool ok = true;
  std::string detail;
  for (const char* name : {"tanh.json", "lqr.json", "picard_timevarying.json"}) {
    const std::string problem = std::string(MRICCATI_SAMPLES_DIR) + "/" + name;
    std::string csv[2];
    for (int run = 0; run < 2; ++run) {
      cli::Options opt;
      opt.out_dir = (root / (std::string(name) + std::to_string(run))).string();
      std::ostringstream sink;
      const int code = cli::cmd_solve(problem, opt, sink);
      ok = ok && code == 0;
      csv[run] = slurp(fs::path(opt.out_dir) / "solution.csv");
    }
    const bool same = !csv[0].empty() && csv[0] == csv[1];
    ok = ok && same;
    detail += std::string(name) + (same ? " identical  " : " DIFFERS  ");
  }
  fs::remove_all(root);
  report(8, "deterministic solve output", ok, detail);
}

}  // namespace

int main() {
  try {
    closed_forms();
    const std::vector<Case> cases = oracle_equivalence();
    iterate_invariants(cases);
    cross_solver(cases);
    const double k = tanh_constant();
    representations(cases, k);
    volterra_forms();
    flow_identity(cases, k);
    determinism();
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%s: %d failing criteria\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
