#pragma once

#include "mfbsde/condexp.hpp"
#include "mfbsde/generators.hpp"
#include "mfbsde/solvers.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace mfbsde {

/// Everything needed to reproduce one solve.
struct Problem {
  std::string fixture = "pure_quadratic";
  nlohmann::json params = nlohmann::json::object();
  /// Empty: the fixture's default scheme.
  std::string scheme;
  double T = 1.0;
  Index M = 64;
  Index N = Index{1} << 14;
  std::uint64_t seed = 1;
  bool antithetic = true;
  RegressionBasis basis = RegressionBasis::polynomial(3);
  SchemeOptions options;
};

/// Owns the ensemble and the engine that solutions refer to.
struct ProblemRun {
  Problem problem;
  std::string scheme;
  Fixture fixture;
  std::unique_ptr<PathEnsemble> paths;
  std::unique_ptr<RegressionEngine> engine;
  Eigen::MatrixXd terminal;
  Window window;
  std::optional<LocalResult> local;
  std::optional<GlobalResult> global;
  std::optional<ThetaResult> theta;
  std::optional<VolterraResult> volterra;

  const Solution& solution() const;
  /// The trace of the scheme's Picard iteration (inner trace for Volterra;
  /// the first-solved window for global stitching).
  const PicardTrace& trace() const;
  /// Particle mean of Y at the first window node.
  Eigen::VectorXd Y0() const;
};

/// Builds the fixture, ensemble and engine without solving.
ProblemRun prepare(const Problem& problem);
/// As prepare, on a given ensemble (whose grid and size replace T, M, N).
ProblemRun prepare(const Problem& problem, PathEnsemble paths);
/// prepare, then run the scheme. Solver failures propagate as SolverDivergence.
ProblemRun solve_problem(const Problem& problem);
void run_scheme(ProblemRun& run);

}  // namespace mfbsde
