#include "mfbsde/diagnostics.hpp"
#include "mfbsde/problem.hpp"

#include <doctest.h>

#include <cmath>

using namespace mfbsde;

namespace {

struct Setup {
  PathEnsemble paths = sample_brownian(build_grid(1.0, 32), 2048, 1, 4);
  RegressionEngine engine{paths, RegressionBasis::polynomial(2)};
};

}  // namespace

TEST_CASE("BMO of a constant integrand") {
  Setup s;
  std::vector<Eigen::MatrixXd> Z(32, Eigen::MatrixXd::Ones(2048, 1));
  CHECK(std::abs(bmo_norm(Z, s.engine, full_window(s.paths.grid())) - 1.0) <= 0.02);
  for (Index k = 16; k < 32; ++k) Z[static_cast<std::size_t>(k)].setZero();
  CHECK(bmo_norm(Z, s.engine, full_window(s.paths.grid())) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-10));
}

TEST_CASE("John-Nirenberg inequality for a constant integrand") {
  Setup s;
  std::vector<Eigen::MatrixXd> Z(32, Eigen::MatrixXd::Constant(2048, 1, 0.5));
  const BoundReport r = john_nirenberg(Z, s.engine, full_window(s.paths.grid()));
  CHECK_FALSE(r.skipped);
  CHECK(r.observed == doctest::Approx(std::exp(0.25)));
  CHECK(r.bound == doctest::Approx(4.0 / 3.0));
  CHECK(r.satisfied);
  std::vector<Eigen::MatrixXd> big(32, Eigen::MatrixXd::Constant(2048, 1, 2.0));
  CHECK(john_nirenberg(big, s.engine, full_window(s.paths.grid())).skipped);
}

TEST_CASE("theta gap inverts exactly") {
  Solution a(build_grid(1.0, 2), 8, 1, 1), b(build_grid(1.0, 2), 8, 1, 1);
  for (std::size_t k = 0; k < 3; ++k) {
    a.Y[k] = Eigen::MatrixXd::Random(8, 1);
    b.Y[k] = Eigen::MatrixXd::Random(8, 1);
  }
  const ThetaGap g = theta_gap(a, b, 0.25);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(((0.75 * g.delta[k] + 0.25 * a.Y[k]) - b.Y[k]).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(((0.75 * g.delta_tilde[k] + 0.25 * b.Y[k]) - a.Y[k]).cwiseAbs().maxCoeff() <= 1e-14);
  }
  CHECK_THROWS_AS(theta_gap(a, b, 1.0), std::invalid_argument);
}

TEST_CASE("log sup exponential moment") {
  std::vector<Eigen::MatrixXd> Y{Eigen::MatrixXd::Constant(4, 1, 1.0), Eigen::MatrixXd::Constant(4, 1, -3.0)};
  CHECK(log_sup_exp_moment(Y, 2.0, 0.5) == doctest::Approx(3.0));
}

TEST_CASE("contraction fit on synthetic differences") {
  const ContractionSummary s = contraction_trace(std::vector<double>{1.0, 0.3, 0.12, 0.05});
  CHECK(s.rate >= 0.3);
  CHECK(s.rate <= 0.45);
  CHECK(s.monotone);
  CHECK(s.contracting);
  CHECK_FALSE(contraction_trace(std::vector<double>{1.0, 2.0, 0.5}).monotone);
  CHECK_THROWS_AS(contraction_trace(std::vector<double>{1.0, 0.5}), std::invalid_argument);
}

TEST_CASE("a-priori bounds hold on a certified window") {
  Problem p;
  p.fixture = "pure_quadratic";
  p.params = {{"clip", 1.0}};
  p.scheme = "local";
  const Fixture f = fixture("pure_quadratic", p.params);
  p.T = local_window(*f.local, 1).eps;
  p.M = 32;
  p.N = 10000;
  p.options.window_steps = 32;
  const ProblemRun run = solve_problem(p);
  const Solution& sol = run.solution();
  double u = 0.0;
  for (const auto& y : sol.Y) u = std::max(u, y.cwiseAbs().maxCoeff());
  const auto reports = check_apriori_local(sol, *f.local, run.local->constants, run.window, *run.engine,
                                           {u, bmo_norm(sol, *run.engine)});
  REQUIRE(reports.size() == 4);
  for (const auto& r : reports) {
    CAPTURE(r.name);
    CHECK(r.satisfied);
  }
}

TEST_CASE("envelope holds for the stitched eq41 solution") {
  Problem p;
  p.fixture = "eq41";
  p.N = 2048;
  p.M = 16;
  const ProblemRun run = solve_problem(p);
  for (const auto& r : check_envelope(run.solution(), run.global->constants, run.engine.get())) {
    CAPTURE(r.name);
    CHECK(r.satisfied);
  }
}

TEST_CASE("reports serialize non-finite values as strings") {
  BoundReport r;
  r.name = "x";
  r.bound = std::numeric_limits<double>::infinity();
  const auto j = to_json(r);
  CHECK(j["bound"] == "inf");
  CHECK(j["name"] == "x");
}
