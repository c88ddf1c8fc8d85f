#include "mfbsde/condexp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mfbsde {

namespace {

/// Standardized coordinates with spread; constant coordinates removed.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& state) {
  const Index N = state.rows();
  std::vector<Index> keep;
  Eigen::VectorXd mean = state.colwise().mean().transpose();
  Eigen::VectorXd sd(state.cols());
  for (Index j = 0; j < state.cols(); ++j) {
    sd[j] = std::sqrt((state.col(j).array() - mean[j]).square().sum() / static_cast<double>(N));
    if (sd[j] > 1e-14 * (1.0 + std::abs(mean[j]))) keep.push_back(j);
  }
  Eigen::MatrixXd out(N, static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const Index j = keep[c];
    out.col(static_cast<Index>(c)) = (state.col(j).array() - mean[j]) / sd[j];
  }
  return out;
}

void monomial_exponents(Index s, int degree, std::vector<int>& current, Index pos, int left,
                        std::vector<std::vector<int>>& out) {
  if (pos == s) {
    out.push_back(current);
    return;
  }
  for (int e = 0; e <= left; ++e) {
    current[static_cast<std::size_t>(pos)] = e;
    monomial_exponents(s, degree, current, pos + 1, left - e, out);
  }
  current[static_cast<std::size_t>(pos)] = 0;
}

Eigen::MatrixXd polynomial_design(const Eigen::MatrixXd& x, int degree) {
  const Index s = x.cols();
  std::vector<std::vector<int>> exps;
  std::vector<int> cur(static_cast<std::size_t>(s), 0);
  monomial_exponents(s, degree, cur, 0, degree, exps);
  // Order by total degree so the intercept comes first.
  std::stable_sort(exps.begin(), exps.end(), [](const auto& a, const auto& b) {
    int da = 0, db = 0;
    for (int e : a) da += e;
    for (int e : b) db += e;
    return da < db;
  });
  Eigen::MatrixXd A = Eigen::MatrixXd::Ones(x.rows(), static_cast<Index>(exps.size()));
  for (std::size_t c = 0; c < exps.size(); ++c)
    for (Index j = 0; j < s; ++j)
      for (int e = 0; e < exps[c][static_cast<std::size_t>(j)]; ++e)
        A.col(static_cast<Index>(c)).array() *= x.col(j).array();
  return A;
}

Eigen::MatrixXd piecewise_design(const Eigen::MatrixXd& x, int bins) {
  const Index N = x.rows(), s = x.cols();
  std::vector<Index> cell(static_cast<std::size_t>(N), 0);
  Index cells = 1;
  for (Index j = 0; j < s; ++j) {
    const double lo = x.col(j).minCoeff(), hi = x.col(j).maxCoeff();
    const double width = (hi - lo) / bins;
    for (Index p = 0; p < N; ++p) {
      Index b = static_cast<Index>(std::floor((x(p, j) - lo) / width));
      b = std::clamp<Index>(b, 0, bins - 1);
      cell[static_cast<std::size_t>(p)] = cell[static_cast<std::size_t>(p)] * bins + b;
    }
    cells *= bins;
  }
  // Intercept plus one indicator per occupied cell other than the first
  // occupied one, which the intercept stands in for.
  std::vector<Index> column(static_cast<std::size_t>(cells), -1);
  std::vector<bool> seen(static_cast<std::size_t>(cells), false);
  for (Index p = 0; p < N; ++p) seen[static_cast<std::size_t>(cell[static_cast<std::size_t>(p)])] = true;
  Index B = 1;
  bool reference = false;
  for (Index c = 0; c < cells; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) continue;
    if (!reference) {
      reference = true;
      continue;
    }
    column[static_cast<std::size_t>(c)] = B++;
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, B);
  A.col(0).setOnes();
  for (Index p = 0; p < N; ++p) {
    const Index c = column[static_cast<std::size_t>(cell[static_cast<std::size_t>(p)])];
    if (c > 0) A(p, c) = 1.0;
  }
  return A;
}

}  // namespace

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& state, const RegressionBasis& basis) {
  if (state.rows() < 1) throw std::invalid_argument("design_matrix: no particles");
  if (!state.allFinite()) throw std::invalid_argument("design_matrix: non-finite state");
  const Eigen::MatrixXd x = standardize(state);
  if (basis.kind == RegressionBasis::Kind::polynomial) {
    if (basis.degree < 0) throw std::invalid_argument("design_matrix: negative degree");
    return polynomial_design(x, basis.degree);
  }
  if (basis.bins < 1) throw std::invalid_argument("design_matrix: need at least one bin");
  return piecewise_design(x, basis.bins);
}

Projector::Projector(const Eigen::MatrixXd& state, const RegressionBasis& basis) {
  Eigen::MatrixXd A = design_matrix(state, basis);
  N_ = A.rows();
  B_ = A.cols();
  if (N_ <= B_) throw std::invalid_argument("Projector: need more particles than basis functions");
  qr_.compute(A);
  if (qr_.rank() < B_) {
    ridge_ = true;
    const Eigen::MatrixXd G = A.transpose() * A;
    const double penalty = 1e-10 * G.trace() / static_cast<double>(B_);
    ridge_solver_.compute(G + penalty * Eigen::MatrixXd::Identity(B_, B_));
    design_ = std::move(A);
  }
}

Eigen::MatrixXd Projector::project(const Eigen::MatrixXd& values) const {
  if (values.rows() != N_) throw std::invalid_argument("Projector: value length mismatch");
  if (!values.allFinite()) throw std::invalid_argument("Projector: non-finite values");
  if (ridge_) return design_ * ridge_solver_.solve(design_.transpose() * values);
  Eigen::MatrixXd w = values;
  w.applyOnTheLeft(qr_.householderQ().adjoint());
  w.bottomRows(N_ - B_).setZero();
  w.applyOnTheLeft(qr_.householderQ());
  return w;
}

Eigen::VectorXd Projector::project(const Eigen::VectorXd& values) const {
  return project(Eigen::MatrixXd(values)).col(0);
}

ProjectionResult project(const Eigen::VectorXd& values, const Eigen::MatrixXd& state, const RegressionBasis& basis) {
  if (values.size() != state.rows()) throw std::invalid_argument("project: values and state differ in length");
  Projector P(state, basis);
  return {P.project(values), P.ridge_fallback()};
}

namespace {

Eigen::MatrixXd increment_target(const Projector& P, const Eigen::VectorXd& values, const Eigen::MatrixXd& increments,
                                 double dt) {
  if (increments.rows() != values.size()) throw std::invalid_argument("project_increment: increment rows mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("project_increment: dt must be positive");
  const Eigen::VectorXd centred = values - P.project(values);
  Eigen::MatrixXd target(values.size(), increments.cols());
  for (Index j = 0; j < increments.cols(); ++j) target.col(j) = centred.cwiseProduct(increments.col(j)) / dt;
  return P.project(target);
}

}  // namespace

IncrementProjection project_increment(const Eigen::VectorXd& values, const Eigen::MatrixXd& state,
                                      const Eigen::MatrixXd& increments, double dt, const RegressionBasis& basis) {
  if (values.size() != state.rows()) throw std::invalid_argument("project_increment: values and state differ in length");
  Projector P(state, basis);
  return {increment_target(P, values, increments, dt), P.ridge_fallback()};
}

RegressionEngine::RegressionEngine(const PathEnsemble& paths, RegressionBasis basis, StateMap state)
    : paths_(&paths), basis_(basis) {
  const Index M = paths.grid().steps();
  nodes_.reserve(static_cast<std::size_t>(M + 1));
  for (Index k = 0; k <= M; ++k) {
    const Eigen::MatrixXd s = state ? state(k, paths) : paths.position(k);
    if (s.rows() != paths.particles()) throw std::invalid_argument("RegressionEngine: state map returned wrong row count");
    nodes_.push_back(std::make_unique<Projector>(s, basis_));
  }
}

const Projector& RegressionEngine::at(Index k) const {
  if (k < 0 || k >= static_cast<Index>(nodes_.size())) throw std::out_of_range("RegressionEngine: node out of range");
  return *nodes_[static_cast<std::size_t>(k)];
}

Eigen::MatrixXd RegressionEngine::project_increment(Index k, const Eigen::VectorXd& values) const {
  return increment_target(at(k), values, paths_->increment(k), paths_->grid().dt());
}

Index RegressionEngine::ridge_fallbacks() const {
  Index c = 0;
  for (const auto& p : nodes_) c += p->ridge_fallback() ? 1 : 0;
  return c;
}

}  // namespace mfbsde
