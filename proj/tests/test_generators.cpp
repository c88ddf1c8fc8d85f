#include "mfbsde/generators.hpp"

#include <doctest.h>

#include <cmath>

using namespace mfbsde;
using json = nlohmann::json;

namespace {

MeasureView zero_law(Index n, Index d) {
  return MeasureView(ParticleCloud(Eigen::MatrixXd::Zero(4, n)), ParticleCloud(Eigen::MatrixXd::Zero(4, n * d)));
}

}  // namespace

TEST_CASE("registry lists every fixture and rejects unknown names") {
  const auto names = fixture_names();
  for (const char* n : {"pure_quadratic", "linear_mf", "remark31", "eq41", "bounded_sine_mf", "volterra_demo"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  CHECK_THROWS_AS(fixture("nope"), std::invalid_argument);
}

TEST_CASE("fixture parameters are validated") {
  CHECK_THROWS_AS(fixture("pure_quadratic", {{"gama", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fixture("pure_quadratic", {{"gamma", "one"}}), std::invalid_argument);
  CHECK_THROWS_AS(fixture("eq41", {{"n", 0}}), std::invalid_argument);
  CHECK(fixture("eq41", {{"n", 3}}).spec.n == 3);
}

TEST_CASE("eq41 evaluates its generator verbatim") {
  const Fixture f = fixture("eq41", {{"n", 2}});
  Eigen::VectorXd y(2);
  y << 0.3, -0.4;
  Eigen::MatrixXd z(2, 2);
  z << 0.5, -1.0, 2.0, 0.25;
  const MeasureView law = zero_law(2, 2);
  const double expected = 1.0 + 0.5 + (0.25 + 1.0) + std::sin(std::sqrt(4.0 + 0.0625));
  CHECK(f.spec(0, 0.0, y, z, law, {}) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("remark31 evaluates its generator verbatim") {
  const Fixture f = fixture("remark31");
  Eigen::VectorXd y(2);
  y << 1.0, 1.0;
  Eigen::MatrixXd z(2, 1);
  z << 1.0, 0.0;
  const MeasureView law = zero_law(2, 1);
  // (|y|² + sin|z¹|)|z| + |z|^{4/3} + |z¹|² with both laws at δ0.
  const double expected = (2.0 + std::sin(1.0)) * 1.0 + 1.0 + 1.0;
  CHECK(f.spec(0, 0.0, y, z, law, {}) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("freezing rows keeps the cross-row term as a constant") {
  const Fixture f = fixture("eq41", {{"n", 2}});
  const MeasureView law = zero_law(2, 2);
  const Eigen::VectorXd U = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(2, 2);
  Eigen::RowVectorXd z(2);
  z << 0.3, 0.1;
  const double base = freeze_rows(f.spec, 0, U, V, law)(0.0, z);
  V.row(1) << 1.5, -2.0;
  const double shifted = freeze_rows(f.spec, 0, U, V, law)(0.0, z);
  CHECK(shifted - base == doctest::Approx(std::sin(2.5)).epsilon(1e-14));
  V.row(0) << 9.0, 9.0;  // row i of V is replaced by the argument
  CHECK(freeze_rows(f.spec, 0, U, V, law)(0.0, z) == doctest::Approx(shifted));
}

TEST_CASE("every fixture satisfies its own growth certificates") {
  GrowthOptions o;
  o.budget = 2000;
  for (const auto& name : fixture_names()) {
    const Fixture f = fixture(name);
    CAPTURE(name);
    if (f.local) CHECK(check_growth(f.spec, *f.local, o).ok());
    if (f.global) CHECK(check_growth(f.spec, *f.global, o).ok());
    if (f.convex) CHECK(check_growth(f.spec, *f.convex, o).ok());
  }
}

TEST_CASE("eq41 has no violations against its global certificate at 10^4 samples") {
  const Fixture f = fixture("eq41");
  GrowthOptions o;
  o.budget = 10000;
  const GrowthReport r = check_growth(f.spec, *f.global, o);
  CHECK(r.samples == 10000);
  CHECK(r.ok());
}

TEST_CASE("a cubic driver violates a quadratic certificate") {
  GeneratorSpec spec;
  spec.n = 1;
  spec.d = 1;
  spec.component = [](Index, double, const Eigen::VectorXd&, const Eigen::MatrixXd& z, const MeasureView&,
                      const Eigen::VectorXd&) { return std::pow(z.norm(), 3.0); };
  CertificateConvex c;
  c.K = 1.0;
  c.gamma = 1.0;
  c.convexity = {Convexity::convex};
  GrowthOptions o;
  o.z_radius = 5.0;
  const GrowthReport r = check_growth(spec, c, o);
  CHECK_FALSE(r.ok());
  CHECK(r.violations.front().value > r.violations.front().bound);
}

TEST_CASE("certificates reject invalid levels") {
  CertificateLocal c;
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CertificateConvex v;
  v.convexity = {Convexity::convex};
  CHECK_THROWS_AS(v.validate(2), std::invalid_argument);
  CertificateVolterra w;
  w.C = -1.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
