#include "mfbsde/problem.hpp"

#include "mfbsde/constants.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mfbsde {

const Solution& ProblemRun::solution() const {
  if (local) return local->solution;
  if (global) return global->solution;
  if (theta) return theta->solution;
  if (volterra) return volterra->solution;
  throw std::logic_error("ProblemRun: not solved");
}

const PicardTrace& ProblemRun::trace() const {
  if (local) return local->trace;
  if (global) {
    if (global->report.traces.empty()) throw std::logic_error("ProblemRun: no windows");
    return global->report.traces.front();
  }
  if (theta) return theta->trace;
  if (volterra) return volterra->inner_trace;
  throw std::logic_error("ProblemRun: not solved");
}

Eigen::VectorXd ProblemRun::Y0() const {
  return solution().Y[static_cast<std::size_t>(window.first)].colwise().mean().transpose();
}

namespace {

ProblemRun make_run(const Problem& problem) {
  problem.options.validate();
  ProblemRun run;
  run.problem = problem;
  run.fixture = fixture(problem.fixture, problem.params);
  run.scheme = problem.scheme.empty() ? run.fixture.default_scheme : problem.scheme;
  if (run.scheme != "local" && run.scheme != "global" && run.scheme != "theta" && run.scheme != "volterra")
    throw std::invalid_argument("unknown scheme '" + run.scheme + "'");
  const bool ok = (run.scheme == "local" && run.fixture.local) || (run.scheme == "global" && run.fixture.global) ||
                  (run.scheme == "theta" && run.fixture.convex) ||
                  (run.scheme == "volterra" && run.fixture.volterra && run.fixture.g && run.fixture.convex);
  if (!ok) throw std::invalid_argument("fixture " + run.fixture.name + " has no certificate for scheme " + run.scheme);
  return run;
}

void attach(ProblemRun& run, PathEnsemble paths) {
  const Problem& problem = run.problem;
  if (paths.dim() != run.fixture.spec.d) throw std::invalid_argument("ensemble dimension does not match the fixture");
  run.problem.T = paths.grid().horizon();
  run.problem.M = paths.grid().steps();
  run.problem.N = paths.particles();
  const TimeGrid grid = paths.grid();
  run.paths = std::make_unique<PathEnsemble>(std::move(paths));
  run.engine = std::make_unique<RegressionEngine>(*run.paths, problem.basis);
  run.terminal = run.fixture.terminal(*run.paths);
  run.window = full_window(grid);
  if (run.scheme == "local") {
    Index steps = problem.options.window_steps;
    if (steps == 0) {
      // Default: the certified window [T - eps, T], at least one grid step.
      const double ratio = std::exp(local_window(*run.fixture.local, run.fixture.spec.n).log_eps - std::log(grid.dt()));
      steps = ratio >= static_cast<double>(grid.steps()) ? grid.steps() : std::max<Index>(1, static_cast<Index>(ratio));
    }
    run.window = terminal_window(grid, std::min(steps, grid.steps()));
  }
}

}  // namespace

ProblemRun prepare(const Problem& problem) {
  ProblemRun run = make_run(problem);
  SamplingOptions sampling;
  sampling.antithetic = problem.antithetic;
  attach(run, sample_brownian(build_grid(problem.T, problem.M), problem.N, run.fixture.spec.d, problem.seed, sampling));
  return run;
}

ProblemRun prepare(const Problem& problem, PathEnsemble paths) {
  ProblemRun run = make_run(problem);
  attach(run, std::move(paths));
  return run;
}

void run_scheme(ProblemRun& run) {
  const Fixture& f = run.fixture;
  const SchemeOptions& o = run.problem.options;
  if (run.scheme == "local")
    run.local = solve_local(f.spec, *f.local, run.terminal, run.window, *run.engine, o);
  else if (run.scheme == "global")
    run.global = solve_global(f.spec, *f.global, run.terminal, *run.engine, o);
  else if (run.scheme == "theta")
    run.theta = solve_theta(f.spec, *f.convex, run.terminal, *run.engine, o);
  else
    run.volterra = solve_volterra(f.spec, *f.g, *f.volterra, *f.convex, run.terminal, *run.engine, o);
}

ProblemRun solve_problem(const Problem& problem) {
  ProblemRun run = prepare(problem);
  run_scheme(run);
  return run;
}

}  // namespace mfbsde
