#include "mfbsde/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfbsde {

namespace {

nlohmann::json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

BoundReport compare(std::string name, double bound, double observed, double slack) {
  BoundReport r;
  r.name = std::move(name);
  r.bound = bound;
  r.observed = observed;
  r.slack = slack;
  r.satisfied = observed <= bound * (1.0 + slack);
  return r;
}

/// Comparison in log scale, for bounds that may overflow.
BoundReport compare_log(std::string name, double log_bound, double observed, double slack) {
  BoundReport r;
  r.name = std::move(name);
  r.bound = std::exp(log_bound);
  r.observed = observed;
  r.slack = slack;
  r.satisfied = observed <= 0.0 || std::log(observed) <= log_bound + std::log1p(slack);
  if (!std::isfinite(r.bound)) r.note = "bound compared in log scale: log bound = " + std::to_string(log_bound);
  return r;
}

double logaddexp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

nlohmann::json to_json(const BoundReport& r) {
  nlohmann::json j{{"name", r.name},       {"bound", number(r.bound)}, {"observed", number(r.observed)},
                   {"slack", r.slack},     {"satisfied", r.satisfied}, {"skipped", r.skipped}};
  if (!r.note.empty()) j["note"] = r.note;
  if (r.node) j["node"] = *r.node;
  if (r.particle) j["particle"] = *r.particle;
  if (r.component) j["component"] = *r.component;
  return j;
}

double bmo_norm(const std::vector<Eigen::MatrixXd>& Z, const RegressionEngine& engine, Window window) {
  const TimeGrid& grid = engine.grid();
  if (window.first < 0 || window.last > grid.steps() || window.first >= window.last)
    throw std::invalid_argument("bmo_norm: bad window");
  if (static_cast<Index>(Z.size()) < window.last) throw std::invalid_argument("bmo_norm: Z shorter than the window");
  const double dt = grid.dt();
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(engine.paths().particles());
  double worst = 0.0;
  for (Index k = window.last - 1; k >= window.first; --k) {
    const Eigen::MatrixXd& Zk = Z[static_cast<std::size_t>(k)];
    if (Zk.rows() != cum.size()) throw std::invalid_argument("bmo_norm: Z has the wrong number of particles");
    if (!Zk.allFinite()) throw std::invalid_argument("bmo_norm: non-finite Z");
    cum += dt * Zk.rowwise().squaredNorm();
    worst = std::max(worst, engine.project(k, cum).maxCoeff());
  }
  return std::sqrt(std::max(worst, 0.0));
}

double bmo_norm(const Solution& sol, const RegressionEngine& engine) {
  return bmo_norm(sol.Z, engine, full_window(sol.grid));
}

AprioriBounds apriori_local_bounds(const CertificateLocal& c, Index n, double h, const InputNorms& in,
                                   double Y_sup_observed) {
  c.validate();
  const double nn = static_cast<double>(n), a = c.alpha;
  const double M = m_const<double>(n, c.lambda, a);
  const double p = 2.0 * (1.0 + a) / (1.0 - a);
  const double psum = c.psi(in.U_sup) + c.psi0(in.U_sup);
  const double v1 = c.gamma0 * std::pow(in.V_bmo, 1.0 + a) * std::pow(h, 0.5 * (1.0 - a));
  const double v2 = M * std::pow(in.V_bmo, p) * h;
  AprioriBounds b;
  b.Y_sup = nn / c.gamma * std::log(2.0) + nn * (c.M1 + c.M2) + nn * psum * h + nn * v1 +
            nn * std::pow(c.gamma, (1.0 + a) / (1.0 - a)) * v2;
  const double inner = 1.0 + 2.0 * c.M2 + 2.0 * psum * h + 2.0 * v1 + 2.0 * v2;
  b.log_Z_sq = logaddexp(std::log(nn / c.gamma) + 2.0 * c.gamma * Y_sup_observed + std::log(inner),
                         std::log(nn / (c.gamma * c.gamma)) + 2.0 * c.gamma * c.M1);
  return b;
}

std::vector<BoundReport> check_apriori_local(const Solution& sol, const CertificateLocal& cert,
                                             const LocalConstants& consts, Window w, const RegressionEngine& engine,
                                             const InputNorms& inputs, double slack) {
  double y_sup = 0.0;
  Index worst_node = w.first, worst_particle = 0;
  for (Index k = w.first; k <= w.last; ++k) {
    Index p = 0;
    const double m = sol.Y[static_cast<std::size_t>(k)].rowwise().norm().maxCoeff(&p);
    if (m > y_sup) {
      y_sup = m;
      worst_node = k;
      worst_particle = p;
    }
  }
  const double bmo = bmo_norm(sol.Z, engine, w);
  const double h = sol.grid.node(w.last) - sol.grid.node(w.first);
  const AprioriBounds b = apriori_local_bounds(cert, sol.n, h, inputs, y_sup);

  std::vector<BoundReport> out;
  out.push_back(compare("apriori_Y_sup", b.Y_sup, y_sup, slack));
  out.back().node = worst_node;
  out.back().particle = worst_particle;
  out.push_back(compare_log("apriori_Z_bmo_sq", b.log_Z_sq, bmo * bmo, slack));
  out.push_back(compare("ball_K1", consts.K1, y_sup, slack));
  out.push_back(compare_log("ball_K2", consts.log_K2, bmo * bmo, slack));
  return out;
}

std::vector<BoundReport> check_envelope(const Solution& sol, const GlobalConstants& consts,
                                        const RegressionEngine* engine, double slack) {
  const double nn = static_cast<double>(sol.n);
  double worst = 0.0, worst_sq = 0.0, worst_level = consts.eta(sol.grid.node(sol.grid.steps())) / nn;
  Index wk = 0, wp = 0, wi = 0;
  double y_sq = 0.0;
  for (Index k = 0; k <= sol.grid.steps(); ++k) {
    const Eigen::MatrixXd& Y = sol.Y[static_cast<std::size_t>(k)];
    const double level = consts.eta(sol.grid.node(k)) / nn;
    for (Index p = 0; p < Y.rows(); ++p)
      for (Index i = 0; i < Y.cols(); ++i) {
        const double sq = Y(p, i) * Y(p, i);
        if (sq / level > worst) {
          worst = sq / level;
          worst_sq = sq;
          worst_level = level;
          wk = k;
          wp = p;
          wi = i;
        }
      }
    y_sq = std::max(y_sq, Y.rowwise().squaredNorm().maxCoeff());
  }
  std::vector<BoundReport> out;
  out.push_back(compare("envelope_eta", worst_level, worst_sq, slack));
  out.back().node = wk;
  out.back().particle = wp;
  out.back().component = wi;
  out.push_back(compare_log("kappa", consts.log_kappa, y_sq, slack));
  out.push_back(compare("J1", consts.J1, std::sqrt(y_sq), slack));
  if (engine) {
    const double bmo = bmo_norm(sol, *engine);
    out.push_back(compare_log("J2", consts.log_J2, bmo * bmo, slack));
  }
  return out;
}

BoundReport john_nirenberg(const std::vector<Eigen::MatrixXd>& Z, const RegressionEngine& engine, Window w,
                           double slack) {
  const double bmo = bmo_norm(Z, engine, w);
  BoundReport r;
  r.name = "john_nirenberg";
  r.slack = slack;
  if (bmo >= 1.0) {
    r.skipped = true;
    r.note = "bmo norm " + std::to_string(bmo) + " >= 1; the inequality does not apply";
    r.bound = std::numeric_limits<double>::infinity();
    return r;
  }
  const double dt = engine.grid().dt();
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(engine.paths().particles());
  double left = 1.0;
  for (Index k = w.last - 1; k >= w.first; --k) {
    cum += dt * Z[static_cast<std::size_t>(k)].rowwise().squaredNorm();
    const double m = exp_moment(cum, 1.0).value;
    if (m > left) {
      left = m;
      r.node = k;
    }
  }
  r.bound = 1.0 / (1.0 - bmo * bmo);
  r.observed = left;
  r.satisfied = left <= r.bound * (1.0 + slack);
  return r;
}

double log_sup_exp_moment(const std::vector<Eigen::MatrixXd>& Y, double q, double gamma) {
  if (Y.empty()) throw std::invalid_argument("log_sup_exp_moment: empty field");
  Eigen::VectorXd sup = Eigen::VectorXd::Zero(Y.front().rows());
  for (const auto& Yk : Y) sup = sup.cwiseMax(Yk.rowwise().norm());
  return exp_moment(gamma * sup, q).log_value;
}

ThetaGap theta_gap(const Solution& Ym, const Solution& Ymp, double theta, double gamma) {
  if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("theta_gap: theta must lie in (0,1)");
  if (Ym.Y.size() != Ymp.Y.size() || Ym.N != Ymp.N || Ym.n != Ymp.n)
    throw std::invalid_argument("theta_gap: solutions differ in shape");
  ThetaGap g;
  g.theta = theta;
  const double s = 1.0 - theta;
  for (std::size_t k = 0; k < Ym.Y.size(); ++k) {
    g.delta.push_back((Ymp.Y[k] - theta * Ym.Y[k]) / s);
    g.delta_tilde.push_back((Ym.Y[k] - theta * Ymp.Y[k]) / s);
  }
  g.log_moment_q1 = log_sup_exp_moment(g.delta, 1.0, gamma);
  g.log_moment_q2 = log_sup_exp_moment(g.delta, 2.0, gamma);
  g.log_moment_tilde_q1 = log_sup_exp_moment(g.delta_tilde, 1.0, gamma);
  g.log_moment_tilde_q2 = log_sup_exp_moment(g.delta_tilde, 2.0, gamma);
  return g;
}

ContractionSummary contraction_trace(const std::vector<double>& diffs) {
  if (diffs.size() < 3) throw std::invalid_argument("contraction_trace: need at least 3 differences");
  ContractionSummary s;
  std::vector<double> x, y;
  for (std::size_t j = 0; j < diffs.size(); ++j)
    if (diffs[j] > 0.0 && std::isfinite(diffs[j])) {
      x.push_back(static_cast<double>(j));
      y.push_back(std::log(diffs[j]));
    }
  s.used = static_cast<Index>(x.size());
  s.monotone = true;
  for (std::size_t j = 1; j < diffs.size(); ++j)
    if (!(diffs[j] < diffs[j - 1] || (diffs[j] == 0.0 && diffs[j - 1] == 0.0))) s.monotone = false;
  if (x.size() < 2) {
    // Exact convergence within one or two iterations.
    s.rate = 0.0;
    s.contracting = true;
    return s;
  }
  Eigen::MatrixXd A(static_cast<Index>(x.size()), 2);
  Eigen::VectorXd b(static_cast<Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) {
    A(static_cast<Index>(j), 0) = 1.0;
    A(static_cast<Index>(j), 1) = x[j];
    b[static_cast<Index>(j)] = y[j];
  }
  const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(b);
  s.rate = std::exp(coef[1]);
  s.contracting = s.rate < 1.0 - 1e-9;
  return s;
}

ContractionSummary contraction_trace(const PicardTrace& trace) { return contraction_trace(trace.differences()); }

}  // namespace mfbsde
