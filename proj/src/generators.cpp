#include "mfbsde/generators.hpp"

#include <random>
#include <stdexcept>

namespace mfbsde {

Eigen::VectorXd GeneratorSpec::evaluate(double t, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                                        const MeasureView& law, const Eigen::VectorXd& aux) const {
  Eigen::VectorXd out(n);
  for (Index i = 0; i < n; ++i) out[i] = component(i, t, y, z, law, aux);
  return out;
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

void Monomial::validate() const {
  require(finite_nonneg(c0) && finite_nonneg(c1), "Monomial: coefficients must be finite and nonnegative");
  require(std::isfinite(r) && r >= 1.0, "Monomial: exponent must be at least 1");
}

void CertificateLocal::validate() const {
  require(std::isfinite(gamma) && gamma > 0.0, "CertificateLocal: gamma must be positive");
  require(std::isfinite(lambda) && lambda > 0.0, "CertificateLocal: lambda must be positive");
  require(std::isfinite(gamma0) && gamma0 > 0.0, "CertificateLocal: gamma0 must be positive");
  require(std::isfinite(alpha) && alpha >= 0.0 && alpha < 1.0, "CertificateLocal: alpha must lie in [0,1)");
  require(finite_nonneg(M1) && finite_nonneg(M2) && finite_nonneg(zeta), "CertificateLocal: M1, M2, zeta must be nonnegative");
  psi.validate();
  psi0.validate();
}

void CertificateGlobal::validate() const {
  require(std::isfinite(L) && L > 0.0, "CertificateGlobal: L must be positive");
  require(std::isfinite(gamma) && gamma > 0.0, "CertificateGlobal: gamma must be positive");
  require(finite_nonneg(M1) && finite_nonneg(M3) && finite_nonneg(zeta), "CertificateGlobal: M1, M3, zeta must be nonnegative");
  require(std::isfinite(lambda) && lambda > 0.0 && std::isfinite(gamma0) && gamma0 > 0.0,
          "CertificateGlobal: lambda and gamma0 must be positive");
  psi.validate();
}

void CertificateConvex::validate(Index n) const {
  require(finite_nonneg(K), "CertificateConvex: K must be nonnegative");
  require(std::isfinite(gamma) && gamma > 0.0, "CertificateConvex: gamma must be positive");
  require(finite_nonneg(zeta), "CertificateConvex: zeta must be nonnegative");
  require(static_cast<Index>(convexity.size()) == n, "CertificateConvex: one convexity flag per component");
}

void CertificateVolterra::validate() const {
  require(finite_nonneg(C), "CertificateVolterra: C must be nonnegative");
  require(std::isfinite(gamma) && gamma > 0.0, "CertificateVolterra: gamma must be positive");
}

FrozenRow::FrozenRow(const GeneratorSpec& spec, Index i, Eigen::VectorXd U, Eigen::MatrixXd V, const MeasureView& law,
                     Eigen::VectorXd aux)
    : spec_(&spec), i_(i), U_(std::move(U)), V_(std::move(V)), law_(&law), aux_(std::move(aux)) {
  if (i < 0 || i >= spec.n) throw std::out_of_range("freeze_rows: component index out of range");
  if (U_.size() != spec.n || V_.rows() != spec.n || V_.cols() != spec.d)
    throw std::invalid_argument("freeze_rows: U or V has the wrong shape");
}

double FrozenRow::operator()(double t, const Eigen::RowVectorXd& z_row) const {
  if (z_row.size() != spec_->d) throw std::invalid_argument("FrozenRow: z row has the wrong length");
  const Eigen::RowVectorXd saved = V_.row(i_);
  V_.row(i_) = z_row;
  const double v = spec_->component(i_, t, U_, V_, *law_, aux_);
  V_.row(i_) = saved;
  return v;
}

FrozenRow freeze_rows(const GeneratorSpec& spec, Index i, const Eigen::VectorXd& U, const Eigen::MatrixXd& V,
                      const MeasureView& law, const Eigen::VectorXd& aux) {
  return FrozenRow(spec, i, U, V, law, aux);
}

double growth_bound(const CertificateLocal& c, Index i, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                    const MeasureView& law) {
  double cross = 0.0;
  for (Index j = 0; j < z.rows(); ++j)
    if (j != i) cross += std::pow(z.row(j).norm(), 1.0 + c.alpha);
  return c.zeta + c.psi(y.norm()) + 0.5 * c.gamma * z.row(i).squaredNorm() + c.lambda * cross +
         c.psi0(law.y_w(2.0)) + c.gamma0 * std::pow(law.z_w(2.0), 1.0 + c.alpha);
}

double growth_bound(const CertificateGlobal& c, Index i, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                    const MeasureView& law) {
  return c.zeta + c.L * y.norm() + 0.5 * c.gamma * z.row(i).squaredNorm() + c.L * law.y_w(2.0);
}

double growth_bound(const CertificateConvex& c, Index i, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                    const MeasureView& law) {
  return c.zeta + c.K * y.norm() + 0.5 * c.gamma * z.row(i).squaredNorm() + c.K * law.y_w(1.0);
}

namespace {

template <typename Cert>
GrowthReport audit(const GeneratorSpec& spec, const Cert& cert, const GrowthOptions& opts) {
  std::mt19937_64 gen(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> time(0.0, opts.T);
  const Index n = spec.n, d = spec.d, P = std::max<Index>(opts.law_particles, 1);
  GrowthReport report;
  Eigen::VectorXd y(n), aux;
  Eigen::MatrixXd z(n, d), ly(P, n), lz(P, n * d);
  for (Index s = 0; s < opts.budget; ++s) {
    // A fresh radius per sample, so points near the origin and near the box
    // boundary both occur.
    const double sy = opts.y_radius * std::abs(unit(gen));
    const double sz = opts.z_radius * std::abs(unit(gen));
    const double sl = opts.law_radius * std::abs(unit(gen));
    for (Index a = 0; a < n; ++a) y[a] = sy * unit(gen);
    for (Index a = 0; a < n; ++a)
      for (Index b = 0; b < d; ++b) z(a, b) = sz * unit(gen);
    for (Index a = 0; a < P; ++a) {
      for (Index b = 0; b < n; ++b) ly(a, b) = sl * unit(gen);
      for (Index b = 0; b < n * d; ++b) lz(a, b) = sl * unit(gen);
    }
    const MeasureView law{ParticleCloud(ly), ParticleCloud(lz)};
    const double t = time(gen);
    for (Index i = 0; i < n; ++i) {
      const double v = spec.component(i, t, y, z, law, aux);
      const double b = growth_bound(cert, i, y, z, law);
      if (!(std::abs(v) <= b)) report.violations.push_back({i, t, y, z, law.y_w(2.0), law.z_w(2.0), v, b});
    }
    ++report.samples;
  }
  return report;
}

}  // namespace

GrowthReport check_growth(const GeneratorSpec& spec, const CertificateLocal& cert, const GrowthOptions& opts) {
  return audit(spec, cert, opts);
}
GrowthReport check_growth(const GeneratorSpec& spec, const CertificateGlobal& cert, const GrowthOptions& opts) {
  return audit(spec, cert, opts);
}
GrowthReport check_growth(const GeneratorSpec& spec, const CertificateConvex& cert, const GrowthOptions& opts) {
  return audit(spec, cert, opts);
}

}  // namespace mfbsde
