#pragma once

#include "mfbsde/condexp.hpp"
#include "mfbsde/constants.hpp"
#include "mfbsde/generators.hpp"
#include "mfbsde/measures.hpp"
#include "mfbsde/solution.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfbsde {

/// Which iterate supplies the empirical law seen by the driver.
enum class LawSource {
  /// The input (U, V) of the Picard step, as in the literal schemes.
  previous,
  /// The output at node k+1 together with the new Z_k.
  fresh,
};

struct SchemeOptions {
  double tol = 1e-6;
  Index max_iter = 50;
  /// Radius applied to z rows fed to drivers. NaN: 4√K2 when a local
  /// certificate is in play, no clipping otherwise. Infinity: never clip.
  double z_clip = std::numeric_limits<double>::quiet_NaN();
  /// Sweeps ≥ 2 re-evaluate the driver with the component's own y set to the
  /// current Y_k and re-project, an inner fixed point for stiff drivers.
  int inner_sweeps = 1;
  /// Weight of node k in the driver integral over [t_k, t_{k+1}]; node k+1
  /// gets 1 − theta. 1 is the explicit-in-Z Euler rule, 0.5 the trapezoid.
  double theta = 0.5;
  LawSource law_source = LawSource::previous;
  /// Constant added to the initial Picard iterate (uniqueness probes).
  double init_offset = 0.0;
  /// Steps per window (global windows, or the local window); 0 derives it from the certificate.
  Index window_steps = 0;
  /// Global stitching: maximum number of window halvings.
  int max_halvings = 6;

  void validate() const;
};

/// Closed node range [first, last] of a grid; the terminal data live at last.
struct Window {
  Index first = 0;
  Index last = 0;

  Index steps() const { return last - first; }
};

Window full_window(const TimeGrid& grid);
/// The last `steps` steps of the grid, i.e. [T − steps·Δt, T].
Window terminal_window(const TimeGrid& grid, Index steps);

struct PicardRecord {
  /// sup over particles, window nodes and components of |ΔY|.
  double dY_sup = 0.0;
  /// BMO grid estimate of ΔZ over the window.
  double dZ_norm = 0.0;
  /// √(dY_sup² + dZ_norm²).
  double combined = 0.0;
  /// combined / previous combined (NaN on the first record).
  double ratio = std::numeric_limits<double>::quiet_NaN();
  double max_abs_Y = 0.0;
  /// BMO grid estimate of Z² over the window.
  double bmo_sq = 0.0;
  /// max|Y| ≤ K1 and bmo² ≤ K2, each with 5% slack; unset without a local certificate.
  std::optional<bool> in_ball;
  /// log E exp(qγ sup_t |Y_t|) for q = 1, 2.
  double log_exp_moment_q1 = 0.0;
  double log_exp_moment_q2 = 0.0;
  Index clip_events = 0;
};

struct PicardTrace {
  std::vector<PicardRecord> records;
  bool converged = false;

  Index iterations() const { return static_cast<Index>(records.size()); }
  std::vector<double> differences() const;
};

class SolverDivergence : public std::runtime_error {
public:
  SolverDivergence(const std::string& what, PicardTrace trace = {})
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const PicardTrace& trace() const { return trace_; }

private:
  PicardTrace trace_;
};

/// Scalar driver at node k for particle p, given the component's own y and
/// its z row.
using ScalarDriver = std::function<double(Index k, Index p, double y_own, const Eigen::RowVectorXd& z_row)>;

struct ScalarOptions {
  double z_clip = std::numeric_limits<double>::infinity();
  int inner_sweeps = 1;
  double theta = 0.5;
};

/// Y[j], Z[j] refer to window node first + j.
struct ScalarSolution {
  std::vector<Eigen::VectorXd> Y;
  std::vector<Eigen::MatrixXd> Z;
  Index clip_events = 0;
};

/// Backward recursion on a window: Z_k = E_k[Y_{k+1}ΔW_kᵀ]/Δt and
/// Y_k = E_k[Y_{k+1} + (1−θ)Δt f_{k+1}] + θΔt f_k(clip(Z_k)).
/// z_end is the z row used for f at the window end; by default Z of the last
/// step is reused there.
ScalarSolution solve_scalar(const RegressionEngine& engine, const ScalarDriver& driver, const Eigen::VectorXd& terminal,
                            Window window, const ScalarOptions& opts = {}, const Eigen::MatrixXd* z_end = nullptr);

/// One application of Ψ on a window: every component i solves the scalar
/// problem driven by f^{i,U,V} with (U, V) = input. Nodes outside the window
/// are copied from the input, and the input's Z at the window end (if any)
/// feeds the driver there.
Solution psi_map(const GeneratorSpec& spec, const Solution& input, Window window, const RegressionEngine& engine,
                 const SchemeOptions& opts, double z_clip, Index* clip_events = nullptr);

struct LocalResult {
  Solution solution;
  PicardTrace trace;
  LocalConstants constants;
};

/// Picard iteration of Ψ on a window, started from the terminal data held
/// flat with V = 0. context supplies nodes outside the window.
LocalResult solve_local(const GeneratorSpec& spec, const CertificateLocal& cert, const Eigen::MatrixXd& terminal,
                        Window window, const RegressionEngine& engine, const SchemeOptions& opts,
                        const Solution* context = nullptr);

struct WindowReport {
  std::vector<Window> windows;
  std::vector<PicardTrace> traces;
  Index planned_steps = 0;
  Index halvings = 0;
  /// Largest |Y_left(seam) − Y_right(seam)| over seams.
  double seam_mismatch = 0.0;
  /// max over nodes, particles, components of |Y^i|²/(η(t)/n).
  double envelope_ratio = 0.0;
};

struct GlobalResult {
  Solution solution;
  GlobalConstants constants;
  WindowReport report;
};

GlobalResult solve_global(const GeneratorSpec& spec, const CertificateGlobal& cert, const Eigen::MatrixXd& terminal,
                          const RegressionEngine& engine, const SchemeOptions& opts);

struct ThetaResult {
  Solution solution;
  PicardTrace trace;
};

/// Picard iteration over [0, T] from (Y⁰, Z⁰) = (0, 0); each step freezes y
/// and the law at the previous iterate.
ThetaResult solve_theta(const GeneratorSpec& spec, const CertificateConvex& cert, const Eigen::MatrixXd& terminal,
                        const RegressionEngine& engine, const SchemeOptions& opts);

struct VolterraRecord {
  double dY_sup = 0.0;
  /// log E[sup_k e^{βt_k}|ΔY_k|²].
  double log_weighted = 0.0;
  /// exp of the difference of consecutive log_weighted values.
  double ratio = std::numeric_limits<double>::quiet_NaN();
};

struct VolterraResult {
  Solution solution;
  Solution inner;
  PicardTrace inner_trace;
  std::vector<VolterraRecord> outer;
  double beta = 0.0;
  bool converged = false;
};

/// Inner solve Y′ by solve_theta, then Y^{m+1}_k = Y′_k + E_k[Σ_{j≥k} w_j g_j Δt]
/// with the θ-rule weights w_j. Z is that of the inner solve.
VolterraResult solve_volterra(const GeneratorSpec& f, const PathFunctional& g, const CertificateVolterra& vcert,
                              const CertificateConvex& fcert, const Eigen::MatrixXd& terminal,
                              const RegressionEngine& engine, const SchemeOptions& opts);

/// Per-node RMS of Y_k − E_k[Y_{k+1} + (1−θ)Δt f_{k+1}] − θΔt f_k with the
/// driver evaluated at the solution itself (M entries).
Eigen::VectorXd discrete_residual(const GeneratorSpec& spec, const Solution& sol, const RegressionEngine& engine,
                                  const SchemeOptions& opts);

}  // namespace mfbsde
