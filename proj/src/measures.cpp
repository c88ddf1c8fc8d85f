#include "mfbsde/measures.hpp"

namespace mfbsde {

double exact_wasserstein_small(const ParticleCloud& a, const ParticleCloud& b, double p) {
  detail::check_order(p);
  if (a.size() != b.size() || a.dim() != b.dim())
    throw std::invalid_argument("exact_wasserstein_small: shape mismatch");
  if (a.size() > 8) throw std::invalid_argument("exact_wasserstein_small: at most 8 points");
  const Eigen::Index n = a.size();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      cost += std::pow((a.points().row(i) - b.points().row(perm[static_cast<std::size_t>(i)])).norm(), p);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / static_cast<double>(n), 1.0 / p);
}

MeasureView::MeasureView(ParticleCloud y, ParticleCloud z, bool coupled)
    : y_(std::move(y)), z_(std::move(z)), coupled_(coupled) {
  if (coupled_ && y_.size() != z_.size()) throw std::invalid_argument("MeasureView: coupled clouds differ in size");
  y_w1_ = wasserstein_to_delta(y_, 1.0);
  y_w2_ = wasserstein_to_delta(y_, 2.0);
  z_w1_ = wasserstein_to_delta(z_, 1.0);
  z_w2_ = wasserstein_to_delta(z_, 2.0);
  y_mean_ = y_.points().colwise().mean().transpose();
  y_abs_mean_ = y_.points().cwiseAbs().colwise().mean().transpose();
}

double MeasureView::y_w(double p) const {
  detail::check_order(p);
  return p == 1.0 ? y_w1_ : y_w2_;
}

double MeasureView::z_w(double p) const {
  detail::check_order(p);
  return p == 1.0 ? z_w1_ : z_w2_;
}

}  // namespace mfbsde
