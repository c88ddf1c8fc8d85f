#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mfbsde {

/// N samples in R^m, one per row.
class ParticleCloud {
public:
  ParticleCloud() = default;
  explicit ParticleCloud(Eigen::MatrixXd points) : points_(std::move(points)) {
    if (points_.rows() < 1) throw std::invalid_argument("ParticleCloud: empty cloud");
    if (!points_.allFinite()) throw std::invalid_argument("ParticleCloud: non-finite entry");
  }

  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }

private:
  Eigen::MatrixXd points_;
};

namespace detail {

inline void check_order(double p) {
  if (p != 1.0 && p != 2.0) throw std::invalid_argument("Wasserstein order must be 1 or 2");
}

template <typename Derived>
typename Derived::Scalar row_power_mean(const Eigen::MatrixBase<Derived>& x, double p) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() < 1) throw std::invalid_argument("empty cloud");
  check_order(p);
  if (p == 2.0) return std::sqrt(x.rowwise().squaredNorm().mean());
  return x.rowwise().norm().mean() + Scalar(0);
}

}  // namespace detail

/// W_p(μ, δ0) = (mean |x_i|^p)^{1/p}.
template <typename Derived>
typename Derived::Scalar wasserstein_to_delta(const Eigen::MatrixBase<Derived>& points, double p) {
  return detail::row_power_mean(points, p);
}

inline double wasserstein_to_delta(const ParticleCloud& cloud, double p) {
  return wasserstein_to_delta(cloud.points(), p);
}

/// Index coupling (a_i ↔ b_i). An upper bound on the empirical W_p.
template <typename DA, typename DB>
typename DA::Scalar paired_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b, double p) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("paired_distance: shape mismatch");
  return detail::row_power_mean(a - b, p);
}

inline double paired_distance(const ParticleCloud& a, const ParticleCloud& b, double p) {
  return paired_distance(a.points(), b.points(), p);
}

template <typename Derived, typename F>
double moment(const Eigen::MatrixBase<Derived>& points, F&& phi) {
  if (points.rows() < 1) throw std::invalid_argument("moment: empty cloud");
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += phi(points.row(i));
  return s / static_cast<double>(points.rows());
}

template <typename F>
double moment(const ParticleCloud& cloud, F&& phi) {
  return moment(cloud.points(), std::forward<F>(phi));
}

/// Linear value and the authoritative log value.
struct ExpMoment {
  double value;
  double log_value;
};

/// (1/N) Σ exp(q s_i) in log-sum-exp form.
template <typename Derived>
ExpMoment exp_moment(const Eigen::DenseBase<Derived>& samples, double q) {
  if (samples.size() < 1) throw std::invalid_argument("exp_moment: no samples");
  if (!samples.derived().allFinite()) throw std::invalid_argument("exp_moment: non-finite sample");
  const double shift = q * samples.maxCoeff();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) acc += std::exp(q * samples.derived().coeff(i) - shift);
  const double lv = shift + std::log(acc / static_cast<double>(samples.size()));
  return {std::exp(lv), lv};
}

/// Exact empirical W_p between two clouds of equal (small) size, by
/// enumerating permutations. Kept for documentation-sized examples.
double exact_wasserstein_small(const ParticleCloud& a, const ParticleCloud& b, double p);

/// Empirical law of the coupled pair (Y, Z) at one time node. Marginal
/// statistics the fixtures query are computed once at construction.
class MeasureView {
public:
  MeasureView() = default;
  MeasureView(ParticleCloud y, ParticleCloud z, bool coupled = true);

  const ParticleCloud& y_cloud() const { return y_; }
  const ParticleCloud& z_cloud() const { return z_; }
  bool coupled() const { return coupled_; }

  /// W_p(μ1, δ0) for the Y marginal.
  double y_w(double p) const;
  /// W_p(μ2, δ0) for the Z marginal.
  double z_w(double p) const;
  /// Componentwise mean of Y.
  const Eigen::VectorXd& y_mean() const { return y_mean_; }
  /// Componentwise E|Y^i|.
  const Eigen::VectorXd& y_abs_mean() const { return y_abs_mean_; }

private:
  ParticleCloud y_;
  ParticleCloud z_;
  bool coupled_ = true;
  double y_w1_ = 0.0, y_w2_ = 0.0, z_w1_ = 0.0, z_w2_ = 0.0;
  Eigen::VectorXd y_mean_;
  Eigen::VectorXd y_abs_mean_;
};

}  // namespace mfbsde
