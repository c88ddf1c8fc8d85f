#include "mfbsde/solvers.hpp"

#include "mfbsde/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfbsde {

void SchemeOptions::validate() const {
  if (!(tol >= 0.0)) throw std::invalid_argument("SchemeOptions: tol must be nonnegative");
  if (max_iter < 1) throw std::invalid_argument("SchemeOptions: max_iter must be positive");
  if (!std::isnan(z_clip) && !(z_clip > 0.0)) throw std::invalid_argument("SchemeOptions: z_clip must be positive");
  if (inner_sweeps < 1) throw std::invalid_argument("SchemeOptions: inner_sweeps must be positive");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("SchemeOptions: theta must lie in [0,1]");
  if (!std::isfinite(init_offset)) throw std::invalid_argument("SchemeOptions: init_offset must be finite");
  if (window_steps < 0) throw std::invalid_argument("SchemeOptions: window_steps must be nonnegative");
  if (max_halvings < 0) throw std::invalid_argument("SchemeOptions: max_halvings must be nonnegative");
}

Window full_window(const TimeGrid& grid) { return {0, grid.steps()}; }

Window terminal_window(const TimeGrid& grid, Index steps) {
  if (steps < 1 || steps > grid.steps()) throw std::invalid_argument("terminal_window: steps out of range");
  return {grid.steps() - steps, grid.steps()};
}

std::vector<double> PicardTrace::differences() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.combined);
  return out;
}

namespace {

void check_window(const TimeGrid& grid, Window w) {
  if (w.first < 0 || w.last > grid.steps() || w.first >= w.last)
    throw std::invalid_argument("window must satisfy 0 <= first < last <= M");
}

double resolve_clip(const SchemeOptions& opts, std::optional<double> K2) {
  if (std::isnan(opts.z_clip)) return K2 ? 4.0 * std::sqrt(*K2) : std::numeric_limits<double>::infinity();
  return opts.z_clip;
}

/// Scales every d-wide row block whose norm exceeds radius back onto the sphere.
Index clip_blocks(Eigen::MatrixXd& z, Index d, double radius) {
  if (!std::isfinite(radius)) return 0;
  Index events = 0;
  for (Index p = 0; p < z.rows(); ++p)
    for (Index c = 0; c < z.cols(); c += d) {
      auto block = z.block(p, c, 1, d);
      const double r = block.norm();
      if (r > radius) {
        block *= radius / r;
        ++events;
      }
    }
  return events;
}

MeasureView node_law(const GeneratorSpec& spec, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Z) {
  if (spec.law_dependence == LawDependence::none) return {};
  return MeasureView(ParticleCloud(Y), ParticleCloud(Z));
}

[[noreturn]] void non_finite(const char* where, Index k, Index p, Index i) {
  std::ostringstream os;
  os << where << ": non-finite value at node " << k << ", particle " << p << ", component " << i
     << " (z_clip too large or step too coarse)";
  throw SolverDivergence(os.str());
}

/// out(p, i) = f^i(t, U_p, V_p with row i replaced by Zrows_p^i, law). With
/// own_y, y^i is replaced by own_y(p, i) for component i.
void eval_driver(const GeneratorSpec& spec, double t, const Eigen::MatrixXd& U, const Eigen::MatrixXd& V,
                 const Eigen::MatrixXd& Zrows, const MeasureView& law, const Eigen::MatrixXd& aux,
                 const Eigen::MatrixXd* own_y, Eigen::MatrixXd& out) {
  const Index N = U.rows(), n = spec.n, d = spec.d;
  out.resize(N, n);
  Eigen::VectorXd y(n), a;
  Eigen::MatrixXd z(n, d);
  Eigen::RowVectorXd saved(d);
  for (Index p = 0; p < N; ++p) {
    y = U.row(p).transpose();
    for (Index j = 0; j < n; ++j) z.row(j) = V.block(p, j * d, 1, d);
    if (aux.cols() > 0) a = aux.row(p).transpose();
    for (Index i = 0; i < n; ++i) {
      saved = z.row(i);
      z.row(i) = Zrows.block(p, i * d, 1, d);
      const double keep = y[i];
      if (own_y) y[i] = (*own_y)(p, i);
      out(p, i) = spec.component(i, t, y, z, law, a);
      y[i] = keep;
      z.row(i) = saved;
    }
  }
}

const Eigen::MatrixXd& z_at(const Solution& s, Index k) {
  return s.Z[static_cast<std::size_t>(std::min(k, s.grid.steps() - 1))];
}

void check_finite(const Eigen::MatrixXd& Y, Index k, const char* where) {
  if (Y.allFinite()) return;
  for (Index p = 0; p < Y.rows(); ++p)
    for (Index i = 0; i < Y.cols(); ++i)
      if (!std::isfinite(Y(p, i))) non_finite(where, k, p, i);
}

/// Writes Ψ(input) into the window nodes of output; nodes outside the window
/// are left untouched and output.Y[last] is set from input.
void psi_map_into(const GeneratorSpec& spec, const Solution& input, Window w, const RegressionEngine& engine,
                  const SchemeOptions& opts, double clip, Solution& output, Index& clip_events) {
  const TimeGrid& grid = input.grid;
  const Index M = grid.steps(), n = spec.n, d = spec.d;
  const double dt = grid.dt(), theta = opts.theta;
  const Eigen::MatrixXd& aux = engine.paths().initial();
  const bool fresh = opts.law_source == LawSource::fresh;

  output.Y[static_cast<std::size_t>(w.last)] = input.Y[static_cast<std::size_t>(w.last)];
  Eigen::MatrixXd f_next, f_now, Znew(input.N, n * d), Zc, base;
  for (Index k = w.last - 1; k >= w.first; --k) {
    const auto ku = static_cast<std::size_t>(k);
    const Eigen::MatrixXd& Ynext = output.Y[ku + 1];
    for (Index i = 0; i < n; ++i) Znew.middleCols(i * d, d) = engine.project_increment(k, Eigen::VectorXd(Ynext.col(i)));
    output.Z[ku] = Znew;
    Zc = Znew;
    clip_events += clip_blocks(Zc, d, clip);

    if (k == w.last - 1) {
      Eigen::MatrixXd Zend = w.last < M ? input.Z[static_cast<std::size_t>(w.last)] : Zc;
      clip_events += w.last < M ? clip_blocks(Zend, d, clip) : 0;
      const MeasureView law = fresh ? node_law(spec, Ynext, Zend)
                                    : node_law(spec, input.Y[ku + 1], z_at(input, w.last));
      eval_driver(spec, grid.node(w.last), input.Y[ku + 1], z_at(input, w.last), Zend, law, aux, nullptr, f_next);
    }

    const MeasureView law = fresh ? node_law(spec, Ynext, Znew) : node_law(spec, input.Y[ku], input.Z[ku]);
    eval_driver(spec, grid.node(k), input.Y[ku], input.Z[ku], Zc, law, aux, nullptr, f_now);
    base = engine.project(k, Eigen::MatrixXd(Ynext + (1.0 - theta) * dt * f_next));
    Eigen::MatrixXd& Yk = output.Y[ku];
    Yk = base + theta * dt * f_now;
    for (int s = 1; s < opts.inner_sweeps; ++s) {
      eval_driver(spec, grid.node(k), input.Y[ku], input.Z[ku], Zc, law, aux, &Yk, f_now);
      Yk = base + theta * dt * engine.project(k, f_now);
    }
    check_finite(Yk, k, "psi_map");
    f_next.swap(f_now);
  }
}

double max_abs_diff(const std::vector<Eigen::MatrixXd>& a, const std::vector<Eigen::MatrixXd>& b, Index from,
                    Index to) {
  double m = 0.0;
  for (Index k = from; k <= to; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    m = std::max(m, (a[ku] - b[ku]).cwiseAbs().maxCoeff());
  }
  return m;
}

struct BallRadii {
  double K1;
  double K2;
};

/// Picard iteration of Ψ on a window, starting from `current`, which holds
/// the final iterate on return.
PicardTrace picard(const GeneratorSpec& spec, Solution& current, Window w, const RegressionEngine& engine,
                   const SchemeOptions& opts, double clip, std::optional<BallRadii> ball, double gamma,
                   bool stop_on_combined) {
  PicardTrace trace;
  Solution next = current;
  std::vector<Eigen::MatrixXd> dZ(static_cast<std::size_t>(current.grid.steps()));
  Eigen::VectorXd sup(current.N);
  for (Index it = 0; it < opts.max_iter; ++it) {
    PicardRecord rec;
    psi_map_into(spec, current, w, engine, opts, clip, next, rec.clip_events);

    rec.dY_sup = max_abs_diff(next.Y, current.Y, w.first, w.last);
    for (Index k = w.first; k < w.last; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      dZ[ku] = next.Z[ku] - current.Z[ku];
    }
    rec.dZ_norm = bmo_norm(dZ, engine, w);
    rec.combined = stop_on_combined ? std::hypot(rec.dY_sup, rec.dZ_norm) : rec.dY_sup;
    if (!trace.records.empty()) rec.ratio = rec.combined / trace.records.back().combined;

    sup.setZero();
    for (Index k = w.first; k <= w.last; ++k) sup = sup.cwiseMax(next.Y[static_cast<std::size_t>(k)].rowwise().norm());
    rec.max_abs_Y = sup.maxCoeff();
    const double bmo = bmo_norm(next.Z, engine, w);
    rec.bmo_sq = bmo * bmo;
    if (ball) rec.in_ball = rec.max_abs_Y <= ball->K1 * 1.05 && rec.bmo_sq <= ball->K2 * 1.05;
    rec.log_exp_moment_q1 = exp_moment(gamma * sup, 1.0).log_value;
    rec.log_exp_moment_q2 = exp_moment(gamma * sup, 2.0).log_value;

    trace.records.push_back(rec);
    std::swap(current, next);
    if (!std::isfinite(rec.combined)) throw SolverDivergence("Picard iteration produced non-finite differences", trace);
    if (rec.combined <= opts.tol) {
      trace.converged = true;
      return trace;
    }
  }
  std::ostringstream os;
  os << "Picard iteration did not reach tol " << opts.tol << " in " << opts.max_iter
     << " iterations (last difference " << trace.records.back().combined << "); try a smaller window";
  throw SolverDivergence(os.str(), trace);
}

void check_terminal(const GeneratorSpec& spec, const RegressionEngine& engine, const Eigen::MatrixXd& terminal) {
  if (spec.n < 1 || spec.d != engine.paths().dim())
    throw std::invalid_argument("generator noise dimension does not match the ensemble");
  if (terminal.rows() != engine.paths().particles() || terminal.cols() != spec.n)
    throw std::invalid_argument("terminal values must be N x n");
  if (!terminal.allFinite()) throw std::invalid_argument("terminal values must be finite");
}

}  // namespace

ScalarSolution solve_scalar(const RegressionEngine& engine, const ScalarDriver& driver, const Eigen::VectorXd& terminal,
                            Window w, const ScalarOptions& opts, const Eigen::MatrixXd* z_end) {
  const TimeGrid& grid = engine.grid();
  check_window(grid, w);
  const Index N = engine.paths().particles(), d = engine.paths().dim();
  if (terminal.size() != N) throw std::invalid_argument("solve_scalar: terminal length differs from N");
  if (z_end && (z_end->rows() != N || z_end->cols() != d)) throw std::invalid_argument("solve_scalar: z_end must be N x d");
  const double dt = grid.dt(), theta = opts.theta;

  ScalarSolution out;
  out.Y.assign(static_cast<std::size_t>(w.steps() + 1), Eigen::VectorXd());
  out.Z.assign(static_cast<std::size_t>(w.steps()), Eigen::MatrixXd());
  out.Y.back() = terminal;

  auto evaluate = [&](Index k, const Eigen::MatrixXd& Z, const Eigen::VectorXd& y) {
    Eigen::VectorXd f(N);
    Eigen::RowVectorXd row(d);
    for (Index p = 0; p < N; ++p) {
      row = Z.row(p);
      f[p] = driver(k, p, y[p], row);
    }
    return f;
  };

  Eigen::VectorXd f_next;
  for (Index k = w.last - 1; k >= w.first; --k) {
    const auto j = static_cast<std::size_t>(k - w.first);
    const Eigen::VectorXd& Ynext = out.Y[j + 1];
    out.Z[j] = engine.project_increment(k, Ynext);
    Eigen::MatrixXd Zc = out.Z[j];
    out.clip_events += clip_blocks(Zc, d, opts.z_clip);
    if (k == w.last - 1) {
      Eigen::MatrixXd Zend = z_end ? *z_end : Zc;
      if (z_end) out.clip_events += clip_blocks(Zend, d, opts.z_clip);
      f_next = evaluate(w.last, Zend, Ynext);
    }
    const Eigen::VectorXd base = engine.project(k, Eigen::VectorXd(Ynext + (1.0 - theta) * dt * f_next));
    Eigen::VectorXd f_now = evaluate(k, Zc, Ynext);
    Eigen::VectorXd Yk = base + theta * dt * f_now;
    for (int s = 1; s < opts.inner_sweeps; ++s) {
      f_now = evaluate(k, Zc, Yk);
      Yk = base + theta * dt * engine.project(k, f_now);
    }
    for (Index p = 0; p < N; ++p)
      if (!std::isfinite(Yk[p])) non_finite("solve_scalar", k, p, 0);
    out.Y[j] = std::move(Yk);
    f_next = std::move(f_now);
  }
  return out;
}

Solution psi_map(const GeneratorSpec& spec, const Solution& input, Window window, const RegressionEngine& engine,
                 const SchemeOptions& opts, double z_clip, Index* clip_events) {
  opts.validate();
  check_window(input.grid, window);
  if (input.n != spec.n || input.d != spec.d || input.N != engine.paths().particles())
    throw std::invalid_argument("psi_map: solution shape does not match the generator or ensemble");
  Solution out = input;
  Index clips = 0;
  psi_map_into(spec, input, window, engine, opts, z_clip, out, clips);
  if (clip_events) *clip_events = clips;
  return out;
}

LocalResult solve_local(const GeneratorSpec& spec, const CertificateLocal& cert, const Eigen::MatrixXd& terminal,
                        Window window, const RegressionEngine& engine, const SchemeOptions& opts,
                        const Solution* context) {
  opts.validate();
  cert.validate();
  check_terminal(spec, engine, terminal);
  const TimeGrid& grid = engine.grid();
  check_window(grid, window);
  const LocalRadii radii = local_radii(cert, spec.n);
  LocalConstants consts = local_window(cert, spec.n);

  Solution current = context ? *context : Solution(grid, engine.paths().particles(), spec.n, spec.d, engine.paths().seed());
  if (current.N != terminal.rows() || current.n != spec.n || current.d != spec.d || current.grid.steps() != grid.steps())
    throw std::invalid_argument("solve_local: context shape does not match");
  current.Y[static_cast<std::size_t>(window.last)] = terminal;
  for (Index k = window.first; k < window.last; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    current.Y[ku] = terminal.array() + opts.init_offset;
    current.Z[ku].setZero();
  }
  PicardTrace trace = picard(spec, current, window, engine, opts, resolve_clip(opts, radii.K2),
                             BallRadii{radii.K1, radii.K2}, cert.gamma, true);
  return {std::move(current), std::move(trace), consts};
}

GlobalResult solve_global(const GeneratorSpec& spec, const CertificateGlobal& cert, const Eigen::MatrixXd& terminal,
                          const RegressionEngine& engine, const SchemeOptions& opts) {
  opts.validate();
  check_terminal(spec, engine, terminal);
  const TimeGrid& grid = engine.grid();
  const Index M = grid.steps();
  const double bound = terminal.cwiseAbs().maxCoeff();
  if (bound > cert.M1 * (1.0 + 1e-12)) throw std::invalid_argument("solve_global: terminal exceeds the certificate's M1");

  GlobalResult res{Solution(grid, terminal.rows(), spec.n, spec.d, engine.paths().seed()),
                   global_ode(cert, spec.n, grid.horizon()), {}};
  WindowReport& rep = res.report;
  if (opts.window_steps > 0) {
    rep.planned_steps = std::min(opts.window_steps, M);
  } else {
    const double log_ratio = res.constants.log_delta_kappa - std::log(grid.dt());
    rep.planned_steps = log_ratio >= std::log(static_cast<double>(M))
                            ? M
                            : std::max<Index>(1, static_cast<Index>(std::floor(std::exp(log_ratio))));
  }

  Solution& sol = res.solution;
  sol.Y[static_cast<std::size_t>(M)] = terminal;
  Index last = M;
  while (last > 0) {
    Index steps = std::min(rep.planned_steps, last);
    int halvings = 0;
    for (;;) {
      const Window w{last - steps, last};
      try {
        LocalResult lr = solve_local(spec, res.constants.window_certificate, sol.Y[static_cast<std::size_t>(last)], w,
                                     engine, opts, &sol);
        const auto lu = static_cast<std::size_t>(last);
        rep.seam_mismatch = std::max(rep.seam_mismatch, (lr.solution.Y[lu] - sol.Y[lu]).cwiseAbs().maxCoeff());
        for (Index k = w.first; k < last; ++k) {
          const auto ku = static_cast<std::size_t>(k);
          sol.Y[ku] = std::move(lr.solution.Y[ku]);
          sol.Z[ku] = std::move(lr.solution.Z[ku]);
        }
        rep.windows.push_back(w);
        rep.traces.push_back(std::move(lr.trace));
        last = w.first;
        break;
      } catch (const SolverDivergence&) {
        if (steps == 1 || halvings == opts.max_halvings) throw;
        steps = std::max<Index>(1, steps / 2);
        ++halvings;
        ++rep.halvings;
      }
    }
  }

  const double nn = static_cast<double>(spec.n);
  for (Index k = 0; k <= M; ++k) {
    const double level = res.constants.eta(grid.node(k)) / nn;
    rep.envelope_ratio =
        std::max(rep.envelope_ratio, sol.Y[static_cast<std::size_t>(k)].cwiseAbs2().maxCoeff() / level);
  }
  return res;
}

ThetaResult solve_theta(const GeneratorSpec& spec, const CertificateConvex& cert, const Eigen::MatrixXd& terminal,
                        const RegressionEngine& engine, const SchemeOptions& opts) {
  opts.validate();
  cert.validate(spec.n);
  check_terminal(spec, engine, terminal);
  const TimeGrid& grid = engine.grid();
  Solution current(grid, terminal.rows(), spec.n, spec.d, engine.paths().seed());
  // Y⁰ = 0 before T; the terminal node carries ξ, which Ψ copies through.
  for (Index k = 0; k < grid.steps(); ++k) current.Y[static_cast<std::size_t>(k)].setConstant(opts.init_offset);
  current.Y[static_cast<std::size_t>(grid.steps())] = terminal;
  PicardTrace trace =
      picard(spec, current, full_window(grid), engine, opts, resolve_clip(opts, std::nullopt), std::nullopt, cert.gamma, false);
  return {std::move(current), std::move(trace)};
}

VolterraResult solve_volterra(const GeneratorSpec& f, const PathFunctional& g, const CertificateVolterra& vcert,
                              const CertificateConvex& fcert, const Eigen::MatrixXd& terminal,
                              const RegressionEngine& engine, const SchemeOptions& opts) {
  vcert.validate();
  if (!g.evaluate || g.n != f.n) throw std::invalid_argument("solve_volterra: g must be set and match n");
  const TimeGrid& grid = engine.grid();
  const Index M = grid.steps();
  const double dt = grid.dt(), theta = opts.theta;

  ThetaResult inner = solve_theta(f, fcert, terminal, engine, opts);
  VolterraResult res{inner.solution, inner.solution, std::move(inner.trace), {}, volterra_weight(vcert.C, grid.horizon()),
                     false};
  Solution& cur = res.solution;
  for (auto& Y : cur.Y) Y.setConstant(opts.init_offset);

  Solution next = cur;
  std::vector<Eigen::MatrixXd> G(static_cast<std::size_t>(M + 1));
  Eigen::VectorXd lw(cur.N);
  Index high_ratio_run = 0;
  for (Index it = 0; it < opts.max_iter; ++it) {
    for (Index j = 0; j <= M; ++j) {
      Eigen::MatrixXd gj = g.evaluate(j, cur);
      if (gj.rows() != cur.N || gj.cols() != cur.n) throw std::invalid_argument("solve_volterra: g returned the wrong shape");
      check_finite(gj, j, "solve_volterra");
      G[static_cast<std::size_t>(j)] = std::move(gj);
    }
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(cur.N, cur.n);
    next.Y[static_cast<std::size_t>(M)] = res.inner.Y[static_cast<std::size_t>(M)] + S;
    for (Index k = M - 1; k >= 0; --k) {
      const auto ku = static_cast<std::size_t>(k);
      S += dt * ((1.0 - theta) * G[ku + 1] + theta * G[ku]);
      next.Y[ku] = res.inner.Y[ku] + engine.project(k, S);
      check_finite(next.Y[ku], k, "solve_volterra");
    }

    VolterraRecord rec;
    rec.dY_sup = max_abs_diff(next.Y, cur.Y, 0, M);
    lw.setConstant(-std::numeric_limits<double>::infinity());
    for (Index k = 0; k <= M; ++k) {
      const Eigen::VectorXd sq = (next.Y[static_cast<std::size_t>(k)] - cur.Y[static_cast<std::size_t>(k)]).rowwise().squaredNorm();
      const double bt = res.beta * grid.node(k);
      for (Index p = 0; p < cur.N; ++p)
        if (sq[p] > 0.0) lw[p] = std::max(lw[p], bt + std::log(sq[p]));
    }
    const double top = lw.maxCoeff();
    rec.log_weighted = std::isfinite(top) ? top + std::log((lw.array() - top).exp().mean()) : top;
    if (!res.outer.empty()) {
      const double prev = res.outer.back().log_weighted;
      rec.ratio = !std::isfinite(rec.log_weighted) ? 0.0 : std::exp(rec.log_weighted - prev);
    }
    res.outer.push_back(rec);
    std::swap(cur, next);

    if (rec.dY_sup <= opts.tol) {
      res.converged = true;
      return res;
    }
    high_ratio_run = rec.ratio > 0.5 ? high_ratio_run + 1 : 0;
    if (high_ratio_run >= 3) {
      throw SolverDivergence("solve_volterra: weighted outer ratio stayed above 0.5", res.inner_trace);
    }
  }
  throw SolverDivergence("solve_volterra: outer iteration did not converge", res.inner_trace);
}

Eigen::VectorXd discrete_residual(const GeneratorSpec& spec, const Solution& sol, const RegressionEngine& engine,
                                  const SchemeOptions& opts) {
  const TimeGrid& grid = sol.grid;
  const Index M = grid.steps(), d = spec.d;
  const double dt = grid.dt(), theta = opts.theta, clip = resolve_clip(opts, std::nullopt);
  const Eigen::MatrixXd& aux = engine.paths().initial();
  Eigen::VectorXd out(M);
  Eigen::MatrixXd f_next, f_now, Zc;
  for (Index k = M; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    Zc = z_at(sol, k);
    clip_blocks(Zc, d, clip);
    const MeasureView law = node_law(spec, sol.Y[ku], z_at(sol, k));
    eval_driver(spec, grid.node(k), sol.Y[ku], z_at(sol, k), Zc, law, aux, nullptr, f_now);
    if (k < M) {
      const Eigen::MatrixXd pred = engine.project(k, Eigen::MatrixXd(sol.Y[ku + 1] + (1.0 - theta) * dt * f_next)) +
                                   theta * dt * f_now;
      out[k] = std::sqrt((sol.Y[ku] - pred).squaredNorm() / static_cast<double>(pred.size()));
    }
    f_next.swap(f_now);
  }
  return out;
}

}  // namespace mfbsde
