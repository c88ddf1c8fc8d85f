#pragma once

#include "mfbsde/solvers.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace mfbsde {

/// satisfied ⟺ observed ≤ bound·(1 + slack). Bounds that overflow are
/// compared in log scale.
struct BoundReport {
  std::string name;
  double bound = 0.0;
  double observed = 0.0;
  double slack = 0.0;
  bool satisfied = true;
  bool skipped = false;
  std::string note;
  std::optional<Index> node;
  std::optional<Index> particle;
  std::optional<Index> component;
};

nlohmann::json to_json(const BoundReport& r);

/// Monte Carlo slack used by default.
inline constexpr double kMonteCarloSlack = 0.05;

/// sqrt of max_k max_p E_k[Σ_{j≥k} |Z_j|²Δt] over the window nodes, with the
/// conditional expectation by regression and the ess-sup by particle max.
/// Z holds one N × m matrix per grid step.
double bmo_norm(const std::vector<Eigen::MatrixXd>& Z, const RegressionEngine& engine, Window window);
double bmo_norm(const Solution& sol, const RegressionEngine& engine);

/// Norms of the Picard input on the window, as they enter the local estimates.
struct InputNorms {
  double U_sup = 0.0;
  double V_bmo = 0.0;
};

/// The system estimates for ‖Y‖_{S^∞} and ‖Z‖²_{Z²} evaluated with the
/// certificate and the input norms, against the observed max|Y| and bmo².
std::vector<BoundReport> check_apriori_local(const Solution& sol, const CertificateLocal& cert,
                                             const LocalConstants& consts, Window window,
                                             const RegressionEngine& engine, const InputNorms& inputs,
                                             double slack = kMonteCarloSlack);

/// Right sides of the two local estimates (log scale for the second).
struct AprioriBounds {
  double Y_sup = 0.0;
  double log_Z_sq = 0.0;
};
AprioriBounds apriori_local_bounds(const CertificateLocal& cert, Index n, double horizon, const InputNorms& inputs,
                                   double Y_sup_observed);

/// |Y_t^i|² ≤ η(t)/n at every node, particle and component; then ‖Y‖²_∞ ≤ κ
/// and ‖Y‖_∞ ≤ J1; with an engine, also bmo² ≤ J2.
std::vector<BoundReport> check_envelope(const Solution& sol, const GlobalConstants& consts,
                                        const RegressionEngine* engine = nullptr, double slack = kMonteCarloSlack);

/// max_k mean_p exp(Σ_{j≥k}|Z_j|²Δt) against (1 − bmo²)⁻¹. Skipped when bmo ≥ 1.
BoundReport john_nirenberg(const std::vector<Eigen::MatrixXd>& Z, const RegressionEngine& engine, Window window,
                           double slack = kMonteCarloSlack);

struct ThetaGap {
  double theta = 0.5;
  /// (Y^{m+p} − θY^m)/(1 − θ), per node.
  std::vector<Eigen::MatrixXd> delta;
  /// (Y^m − θY^{m+p})/(1 − θ), per node.
  std::vector<Eigen::MatrixXd> delta_tilde;
  /// log E exp(qγ sup_t |Δ|) for q = 1, 2, for both fields.
  double log_moment_q1 = 0.0;
  double log_moment_q2 = 0.0;
  double log_moment_tilde_q1 = 0.0;
  double log_moment_tilde_q2 = 0.0;
};

ThetaGap theta_gap(const Solution& Ym, const Solution& Ymp, double theta, double gamma = 1.0);

/// log E exp(qγ sup_k |Y_k|) over particles (|·| the Euclidean norm across components).
double log_sup_exp_moment(const std::vector<Eigen::MatrixXd>& Y, double q, double gamma);

struct ContractionSummary {
  /// exp of the least-squares slope of log differences against iteration.
  double rate = 0.0;
  bool monotone = false;
  bool contracting = false;
  Index used = 0;
};

/// Zero differences (converged to round-off) are dropped before fitting.
ContractionSummary contraction_trace(const std::vector<double>& differences);
ContractionSummary contraction_trace(const PicardTrace& trace);

}  // namespace mfbsde
