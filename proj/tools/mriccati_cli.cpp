// Command-line front end: solve | oracle | check | study | lqr-demo.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mriccati/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = mriccati::cli;
  CLI::App app{"Backward Riccati integral equation solver"};
  app.set_version_flag("--version", cli::kVersion);
  app.require_subcommand(1);

  cli::Options opt;
  std::string problem;
  std::string solution;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("problem", problem, "Problem file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--tol-abs", opt.tol_abs, "Absolute stopping tolerance");
    sub->add_option("--tol-rel", opt.tol_rel, "Relative stopping tolerance");
    sub->add_option("--max-iter", opt.max_iter, "Iteration cap");
    sub->add_option("--safety", opt.safety, "Contraction safety factor in (0, 1)");
    sub->add_option("--solver", opt.solver, "monotone | picard | oracle");
    sub->add_option("--out", opt.out_dir, "Output directory");
  };

  auto* solve = app.add_subcommand("solve", "Solve and write P as CSV plus JSON diagnostics");
  add_common(solve);
  auto* oracle = app.add_subcommand("oracle", "Integrate the differential form with RK4");
  add_common(oracle);
  auto* check = app.add_subcommand("check", "Residual and representation checks of a solution CSV");
  add_common(check);
  check->add_option("solution", solution, "Solution CSV")->required()->check(CLI::ExistingFile);
  check->add_option("--threshold", opt.threshold, "Pass threshold for every residual");
  auto* study = app.add_subcommand("study", "Grid refinement study against the RK4 oracle");
  add_common(study);
  study->add_option("--grids", opt.grids, "Grid sizes (at least three)")->required()->delimiter(',');
  auto* lqr = app.add_subcommand("lqr-demo", "Closed-loop cost check of the computed P");
  add_common(lqr);
  lqr->add_option("--x0", opt.x0, "Initial state, comma separated")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kInvalidInput;
  }

  if (*solve) return cli::cmd_solve(problem, opt, std::cout);
  if (*oracle) return cli::cmd_oracle(problem, opt, std::cout);
  if (*check) return cli::cmd_check(problem, solution, opt, std::cout);
  if (*study) return cli::cmd_study(problem, opt, std::cout);
  if (*lqr) return cli::cmd_lqr_demo(problem, opt, std::cout);
  return cli::kInvalidInput;
}
