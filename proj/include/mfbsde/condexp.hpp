#pragma once

#include "mfbsde/paths.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace mfbsde {

struct RegressionBasis {
  enum class Kind { polynomial, piecewise_constant };

  Kind kind = Kind::polynomial;
  /// Total degree for the polynomial basis.
  int degree = 3;
  /// Bins per coordinate for the piecewise-constant basis.
  int bins = 50;

  static RegressionBasis polynomial(int p) { return {Kind::polynomial, p, 0}; }
  static RegressionBasis piecewise(int B) { return {Kind::piecewise_constant, 0, B}; }
};

/// Orthogonal projection onto the span of a basis evaluated at fixed states.
///
/// States are standardized per coordinate; coordinates with no spread are
/// dropped, so at t = 0 only the intercept survives. A rank-deficient design
/// falls back to ridge with penalty 1e-10 · trace(AᵀA)/B.
class Projector {
public:
  Projector(const Eigen::MatrixXd& state, const RegressionBasis& basis);

  Eigen::VectorXd project(const Eigen::VectorXd& values) const;
  /// Column-wise projection.
  Eigen::MatrixXd project(const Eigen::MatrixXd& values) const;

  Index particles() const { return N_; }
  Index basis_size() const { return B_; }
  bool ridge_fallback() const { return ridge_; }

private:
  Index N_ = 0;
  Index B_ = 0;
  bool ridge_ = false;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::MatrixXd design_;
  Eigen::LDLT<Eigen::MatrixXd> ridge_solver_;
};

/// Basis functions evaluated at the states (N × B), intercept first.
Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& state, const RegressionBasis& basis);

struct ProjectionResult {
  Eigen::VectorXd fitted;
  bool ridge_fallback = false;
};

struct IncrementProjection {
  Eigen::MatrixXd fitted;
  bool ridge_fallback = false;
};

ProjectionResult project(const Eigen::VectorXd& values, const Eigen::MatrixXd& state, const RegressionBasis& basis);

/// E_k[values · ΔWᵀ]/Δt. The values are centred by their own projection
/// first; that leaves the target unchanged (E_k[X_k ΔW] = 0) and removes
/// most of the variance.
IncrementProjection project_increment(const Eigen::VectorXd& values, const Eigen::MatrixXd& state,
                                      const Eigen::MatrixXd& increments, double dt, const RegressionBasis& basis);

/// Maps (k, ensemble) to the regression state at node k. Default: W_{t_k}.
using StateMap = std::function<Eigen::MatrixXd(Index k, const PathEnsemble&)>;

/// One projector per grid node of an ensemble, built once.
class RegressionEngine {
public:
  RegressionEngine(const PathEnsemble& paths, RegressionBasis basis, StateMap state = {});

  const PathEnsemble& paths() const { return *paths_; }
  const TimeGrid& grid() const { return paths_->grid(); }
  const RegressionBasis& basis() const { return basis_; }
  const Projector& at(Index k) const;

  Eigen::VectorXd project(Index k, const Eigen::VectorXd& values) const { return at(k).project(values); }
  Eigen::MatrixXd project(Index k, const Eigen::MatrixXd& values) const { return at(k).project(values); }
  /// N × d estimate of E_k[values · ΔW_kᵀ]/Δt, centred as project_increment.
  Eigen::MatrixXd project_increment(Index k, const Eigen::VectorXd& values) const;

  Index ridge_fallbacks() const;

private:
  const PathEnsemble* paths_;
  RegressionBasis basis_;
  std::vector<std::unique_ptr<Projector>> nodes_;
};

}  // namespace mfbsde
