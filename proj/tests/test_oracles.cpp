#include "mfbsde/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mfbsde;

TEST_CASE("Gauss-Hermite integrates polynomials exactly") {
  const GaussHermite gh = gauss_hermite(10);
  const double sp = std::sqrt(std::numbers::pi);
  CHECK(gh.weights.sum() == doctest::Approx(sp).epsilon(1e-13));
  CHECK((gh.weights.array() * gh.nodes.array().square()).sum() == doctest::Approx(sp / 2.0).epsilon(1e-13));
  CHECK((gh.weights.array() * gh.nodes.array().pow(4)).sum() == doctest::Approx(3.0 * sp / 4.0).epsilon(1e-13));
}

TEST_CASE("Cole-Hopf for a linear terminal") {
  const OracleResult o = cole_hopf([](double w) { return w; }, 1.0, 1.0);
  CHECK(std::abs(o.Y0 - 0.5) <= 1e-12);
  CHECK(o.Y_path(0.5, 0.3) == doctest::Approx(0.3 + 0.25).epsilon(1e-12));
}

TEST_CASE("Cole-Hopf for the folded normal, two quadratures") {
  auto g = [](double w) { return std::abs(w); };
  const double Phi1 = 0.5 * std::erfc(-1.0 / std::numbers::sqrt2);
  const double exact = std::log(2.0 * std::exp(0.5) * Phi1);
  const OracleResult gh = cole_hopf(g, 1.0, 1.0);
  ColeHopfOptions mc;
  mc.method = ColeHopfMethod::monte_carlo;
  const OracleResult m = cole_hopf(g, 1.0, 1.0, mc);
  CHECK(std::abs(gh.Y0 - exact) <= 2e-3 * exact);
  CHECK(std::abs(m.Y0 - gh.Y0) <= 2e-3 * gh.Y0);
}

TEST_CASE("Cole-Hopf refuses a non-integrable terminal") {
  CHECK_THROWS_AS(cole_hopf([](double w) { return w * w; }, 2.0, 1.0), OracleRefusal);
}

TEST_CASE("linear mean-field closed forms") {
  CHECK(linear_mf_oracle(0.0, 1.0, LinearTerminal::constant, 1.0, 1.0).Y0 == doctest::Approx(std::exp(1.0)));
  const OracleResult b = linear_mf_oracle(0.0, 1.0, LinearTerminal::brownian, 0.0, 1.0);
  CHECK(b.Y0 == 0.0);
  CHECK(b.Z_path(0.3, 1.2) == 1.0);
}

TEST_CASE("Volterra mean closed form") {
  CHECK(volterra_mean_oracle(1.0, 1.0).Y0 == doctest::Approx(0.5 * (std::exp(1.0) - 1.0)));
}

TEST_CASE("dense references agree within their error bars") {
  Problem p;
  p.fixture = "pure_quadratic";
  p.N = 2048;
  p.M = 16;
  const OracleResult r2 = dense_reference(p, 2);
  const OracleResult r4 = dense_reference(p, 4);
  CHECK(std::abs(r2.Y0 - r4.Y0) <= 3.0 * (r2.error_bar + r4.error_bar));
  DenseOptions tight;
  tight.budget = 100.0;
  CHECK_THROWS_AS(dense_reference(p, 2, tight), BudgetExceeded);
  CHECK_THROWS_AS(dense_reference(p, 3), std::invalid_argument);
}
