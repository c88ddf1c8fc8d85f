#pragma once

#include "mfbsde/measures.hpp"
#include "mfbsde/paths.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mfbsde {

struct Solution;

enum class LawDependence { joint, y_only, none };

/// One component f^i(t, y, z, law, aux). z is n × d, row j is z^j.
using ComponentFn = std::function<double(Index i, double t, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                                         const MeasureView& law, const Eigen::VectorXd& aux)>;

struct GeneratorSpec {
  Index n = 1;
  Index d = 1;
  ComponentFn component;
  bool diagonal = true;
  LawDependence law_dependence = LawDependence::none;

  double operator()(Index i, double t, const Eigen::VectorXd& y, const Eigen::MatrixXd& z, const MeasureView& law,
                    const Eigen::VectorXd& aux) const {
    return component(i, t, y, z, law, aux);
  }
  Eigen::VectorXd evaluate(double t, const Eigen::VectorXd& y, const Eigen::MatrixXd& z, const MeasureView& law,
                           const Eigen::VectorXd& aux) const;
};

/// c0 + c1·x^r.
struct Monomial {
  double c0 = 0.0;
  double c1 = 0.0;
  double r = 1.0;

  double operator()(double x) const { return c0 + (c1 == 0.0 ? 0.0 : c1 * std::pow(x, r)); }
  void validate() const;
};

/// (A1)–(A3). zeta is a constant level for ζ_t, so ∫ζ = zeta·T ≤ M2.
struct CertificateLocal {
  double gamma = 1.0;
  double lambda = 1.0;
  double gamma0 = 1.0;
  double alpha = 0.0;
  double M1 = 0.0;
  double M2 = 0.0;
  double zeta = 0.0;
  Monomial psi;
  Monomial psi0;

  void validate() const;
};

/// (A4)–(A6). lambda and gamma0 are the cross-row and μ2 growth levels used
/// only when the local theorem is re-applied to derive δ_κ.
struct CertificateGlobal {
  double L = 1.0;
  double gamma = 1.0;
  double M1 = 0.0;
  double M3 = 0.0;
  double zeta = 0.0;
  Monomial psi;
  double lambda = 1e-3;
  double gamma0 = 1e-3;

  void validate() const;
};

enum class Convexity { convex, concave };

/// (A7)–(A10).
struct CertificateConvex {
  double K = 0.0;
  double gamma = 1.0;
  double zeta = 0.0;
  std::vector<Convexity> convexity;

  void validate(Index n) const;
};

/// (A11)–(A13).
struct CertificateVolterra {
  double C = 0.0;
  bool bounded_g = true;
  double gamma = 1.0;

  void validate() const;
};

/// g(s, Y_{s∨·}, Z, law) for all particles at node j: returns N × n.
struct PathFunctional {
  Index n = 1;
  std::function<Eigen::MatrixXd(Index j, const Solution& sol)> evaluate;
};

/// ξ as a function of the ensemble (paths and initial channel): N × n.
using TerminalSampler = std::function<Eigen::MatrixXd(const PathEnsemble&)>;

/// f^{i,U,V}: the i-th component with y = U, the law fixed and every row of
/// z except row i taken from V.
class FrozenRow {
public:
  FrozenRow(const GeneratorSpec& spec, Index i, Eigen::VectorXd U, Eigen::MatrixXd V, const MeasureView& law,
            Eigen::VectorXd aux = {});

  double operator()(double t, const Eigen::RowVectorXd& z_row) const;

private:
  const GeneratorSpec* spec_;
  Index i_;
  Eigen::VectorXd U_;
  mutable Eigen::MatrixXd V_;
  const MeasureView* law_;
  Eigen::VectorXd aux_;
};

FrozenRow freeze_rows(const GeneratorSpec& spec, Index i, const Eigen::VectorXd& U, const Eigen::MatrixXd& V,
                      const MeasureView& law, const Eigen::VectorXd& aux = {});

struct GrowthOptions {
  Index budget = 10000;
  std::uint64_t seed = 1;
  double T = 1.0;
  double y_radius = 3.0;
  double z_radius = 3.0;
  double law_radius = 2.0;
  Index law_particles = 8;
};

struct GrowthViolation {
  Index component;
  double t;
  Eigen::VectorXd y;
  Eigen::MatrixXd z;
  double law_y_w2;
  double law_z_w2;
  double value;
  double bound;
};

struct GrowthReport {
  Index samples = 0;
  std::vector<GrowthViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// (A2) bound at one point.
double growth_bound(const CertificateLocal& cert, Index i, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                    const MeasureView& law);
/// (A5) bound.
double growth_bound(const CertificateGlobal& cert, Index i, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                    const MeasureView& law);
/// (A8) bound; the law is that of Y.
double growth_bound(const CertificateConvex& cert, Index i, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                    const MeasureView& law);

GrowthReport check_growth(const GeneratorSpec& spec, const CertificateLocal& cert, const GrowthOptions& opts = {});
GrowthReport check_growth(const GeneratorSpec& spec, const CertificateGlobal& cert, const GrowthOptions& opts = {});
GrowthReport check_growth(const GeneratorSpec& spec, const CertificateConvex& cert, const GrowthOptions& opts = {});

/// Registry entry: a generator with every certificate it satisfies.
struct Fixture {
  std::string name;
  nlohmann::json params;
  GeneratorSpec spec;
  TerminalSampler terminal;
  /// sup |ξ| (infinity when unbounded).
  double terminal_bound = std::numeric_limits<double>::infinity();
  /// ξ = h(W_T) for scalar problems driven by one Brownian coordinate.
  std::function<double(double)> scalar_terminal;
  std::optional<CertificateLocal> local;
  std::optional<CertificateGlobal> global;
  std::optional<CertificateConvex> convex;
  std::optional<CertificateVolterra> volterra;
  std::optional<PathFunctional> g;
  std::string default_scheme;
};

std::vector<std::string> fixture_names();

/// Unknown names and unknown or invalid parameters throw std::invalid_argument.
Fixture fixture(const std::string& name, const nlohmann::json& params = nlohmann::json::object());

}  // namespace mfbsde
