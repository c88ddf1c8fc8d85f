#include "mfbsde/cli.hpp"

#include "mfbsde/diagnostics.hpp"
#include "mfbsde/oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace mfbsde::cli {

using json = nlohmann::json;

namespace {

json jnum(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw SchemaError("unknown key '" + key + "' in " + where);
}

double get_number(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw SchemaError(where + "." + key + " must be a number");
  return j[key].get<double>();
}

Index get_count(const json& j, const char* key, Index fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() || j[key].get<long long>() < 1)
    throw SchemaError(where + "." + key + " must be a positive integer");
  return static_cast<Index>(j[key].get<long long>());
}

std::string get_string(const json& j, const char* key, const std::string& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw SchemaError(where + "." + key + " must be a string");
  return j[key].get<std::string>();
}

bool get_bool(const json& j, const char* key, bool fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw SchemaError(where + "." + key + " must be true or false");
  return j[key].get<bool>();
}

json section(const json& config, const char* key) {
  return config.contains(key) ? config[key] : json::object();
}

json solver_json(const SchemeOptions& o) {
  json clip = std::isnan(o.z_clip) ? json(nullptr) : jnum(o.z_clip);
  return {{"tol", jnum(o.tol)},
          {"max_iter", o.max_iter},
          {"z_clip", clip},
          {"inner_sweeps", o.inner_sweeps},
          {"theta", o.theta},
          {"law_source", o.law_source == LawSource::fresh ? "fresh" : "previous"},
          {"init_offset", o.init_offset},
          {"window_steps", o.window_steps},
          {"max_halvings", o.max_halvings}};
}

json trace_json(const PicardTrace& t) {
  json records = json::array();
  for (const auto& r : t.records) {
    json j{{"dY_sup", jnum(r.dY_sup)},
           {"dZ_norm", jnum(r.dZ_norm)},
           {"combined", jnum(r.combined)},
           {"ratio", jnum(r.ratio)},
           {"max_abs_Y", jnum(r.max_abs_Y)},
           {"bmo_sq", jnum(r.bmo_sq)},
           {"log_exp_moment_q1", jnum(r.log_exp_moment_q1)},
           {"log_exp_moment_q2", jnum(r.log_exp_moment_q2)},
           {"clip_events", r.clip_events}};
    if (r.in_ball) j["in_ball"] = *r.in_ball;
    records.push_back(j);
  }
  return {{"converged", t.converged}, {"iterations", t.iterations()}, {"records", records}};
}

json local_json(const LocalConstants& c) {
  return {{"M_nla", jnum(c.M_nla)},         {"K1", jnum(c.K1)},
          {"K2", jnum(c.K2)},               {"log_K2", jnum(c.log_K2)},
          {"x1", jnum(c.x1)},               {"x2", jnum(c.x2)},
          {"eps", jnum(c.eps)},             {"log_x1", jnum(c.log_x1)},
          {"log_x2", jnum(c.log_x2)},       {"log_eps", jnum(c.log_eps)},
          {"residual1", jnum(c.residual1)}, {"residual2", jnum(c.residual2)}};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// |mean_p Σ_k Z_k^i·ΔW_k| ≤ 4·sd/√N for each component, worst reported.
BoundReport martingale_check(const ProblemRun& run) {
  const Solution& sol = run.solution();
  const Index N = sol.N;
  BoundReport worst;
  worst.name = "martingale_surrogate";
  worst.bound = std::numeric_limits<double>::infinity();
  double worst_margin = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < sol.n; ++i) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(N);
    for (Index k = run.window.first; k < run.window.last; ++k)
      s += sol.z_rows(k, i).cwiseProduct(run.paths->increment(k)).rowwise().sum();
    const double mean = s.mean();
    const double sd = std::sqrt((s.array() - mean).square().sum() / static_cast<double>(std::max<Index>(N - 1, 1)));
    const double bound = 4.0 * sd / std::sqrt(static_cast<double>(N));
    const double margin = std::abs(mean) - bound;
    if (margin > worst_margin) {
      worst_margin = margin;
      worst.bound = bound;
      worst.observed = std::abs(mean);
      worst.component = i;
    }
  }
  worst.satisfied = worst.observed <= worst.bound;
  return worst;
}

std::vector<BoundReport> bound_reports(const ProblemRun& run) {
  const Solution& sol = run.solution();
  std::vector<BoundReport> out;
  if (run.local) {
    double u = 0.0;
    for (Index k = run.window.first; k <= run.window.last; ++k)
      u = std::max(u, sol.Y[static_cast<std::size_t>(k)].rowwise().norm().maxCoeff());
    const InputNorms in{u, bmo_norm(sol.Z, *run.engine, run.window)};
    for (auto& r : check_apriori_local(sol, *run.fixture.local, run.local->constants, run.window, *run.engine, in))
      out.push_back(std::move(r));
  }
  if (run.global)
    for (auto& r : check_envelope(sol, run.global->constants, run.engine.get())) out.push_back(std::move(r));
  out.push_back(john_nirenberg(sol.Z, *run.engine, run.window));
  out.push_back(martingale_check(run));
  if (!run.volterra) {
    const Eigen::VectorXd res = discrete_residual(run.fixture.spec, sol, *run.engine, run.problem.options);
    BoundReport r;
    r.name = "discrete_residual";
    r.bound = 2.0 * run.problem.options.tol;
    Index k = run.window.first;
    r.observed = res.segment(run.window.first, run.window.steps()).maxCoeff(&k);
    r.node = run.window.first + k;
    r.satisfied = r.observed <= r.bound;
    out.push_back(r);
  }
  return out;
}

json result_json(const ProblemRun& run) {
  json Y0 = json::array();
  for (double v : run.Y0()) Y0.push_back(jnum(v));
  json j{{"scheme", run.scheme},
         {"Y0", Y0},
         {"window", {run.window.first, run.window.last}},
         {"t0", run.paths->grid().node(run.window.first)},
         {"ridge_fallbacks", run.engine->ridge_fallbacks()},
         {"trace", trace_json(run.trace())}};
  if (run.global) {
    const WindowReport& w = run.global->report;
    json windows = json::array();
    for (std::size_t s = 0; s < w.windows.size(); ++s)
      windows.push_back({{"first", w.windows[s].first},
                         {"last", w.windows[s].last},
                         {"iterations", w.traces[s].iterations()},
                         {"converged", w.traces[s].converged}});
    j["global"] = {{"planned_steps", w.planned_steps},
                   {"halvings", w.halvings},
                   {"seam_mismatch", jnum(w.seam_mismatch)},
                   {"envelope_ratio", jnum(w.envelope_ratio)},
                   {"windows", windows}};
  }
  if (run.volterra) {
    json outer = json::array();
    for (const auto& r : run.volterra->outer)
      outer.push_back({{"dY_sup", jnum(r.dY_sup)}, {"log_weighted", jnum(r.log_weighted)}, {"ratio", jnum(r.ratio)}});
    j["volterra"] = {{"beta", jnum(run.volterra->beta)}, {"converged", run.volterra->converged}, {"outer", outer}};
  }
  return j;
}

struct Check {
  std::string name;
  std::string kind;
  std::string status;
  double observed = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  std::string note;
  /// Batch-means standard error of the observed value (NaN when not estimated).
  double mc_error = std::numeric_limits<double>::quiet_NaN();
};

json check_json(const Check& c) {
  return {{"name", c.name},
          {"kind", c.kind},
          {"status", c.status},
          {"observed", jnum(c.observed)},
          {"reference", jnum(c.reference)},
          {"tolerance", jnum(c.tolerance)},
          {"mc_error", jnum(c.mc_error)},
          {"note", c.note}};
}

Check oracle_check(std::string name, double observed, double reference, double tolerance, std::string note) {
  Check c{std::move(name), "oracle", "", observed, reference, tolerance, std::move(note)};
  c.status = std::abs(observed - reference) <= tolerance ? "pass" : "fail";
  return c;
}

/// Y_0 against a reference. The tolerance widens to three Monte Carlo
/// standard errors when those exceed it.
Check y0_check(std::string name, double observed, double reference, double tolerance, double se, std::string note) {
  Check c = oracle_check(std::move(name), observed, reference, std::max(tolerance, 3.0 * se), std::move(note));
  c.mc_error = se;
  return c;
}

/// The oracle's mean Y at the first window node: Y_0 itself, or the particle
/// mean of Y_path(t, W_t) when the window starts after 0.
double reference_at_window(const ProblemRun& run, const OracleResult& o) {
  if (run.window.first == 0 || !o.Y_path) return o.Y0;
  const double t = run.paths->grid().node(run.window.first);
  const Eigen::VectorXd w = run.paths->position(run.window.first).col(0);
  double s = 0.0;
  for (Index p = 0; p < w.size(); ++p) s += o.Y_path(t, w[p]);
  return s / static_cast<double>(w.size());
}

std::vector<Check> oracle_checks(const ProblemRun& run) {
  const Fixture& f = run.fixture;
  const json& p = f.params;
  const double T = run.paths->grid().horizon();
  const double y0 = run.Y0()[0];
  const bool has_oracle = f.name == "pure_quadratic" || f.name == "linear_mf" || (f.name == "volterra_demo" && f.spec.n == 1);
  const double se = has_oracle && run.paths->particles() >= 64 ? batch_standard_error(run.problem, *run.paths)
                                                                : std::numeric_limits<double>::quiet_NaN();
  std::vector<Check> out;
  if (f.name == "pure_quadratic") {
    const OracleResult o = cole_hopf(f.scalar_terminal, p["gamma"].get<double>(), T);
    const double ref = reference_at_window(run, o);
    out.push_back(y0_check("cole_hopf_Y0", y0, ref, std::max(0.02 * std::abs(ref), 0.01), se, o.method));
  } else if (f.name == "linear_mf") {
    const double a = p["a"].get<double>(), b = p["b"].get<double>(), c = p["c"].get<double>();
    const bool constant = p["terminal"].get<std::string>() == "constant";
    const OracleResult o =
        linear_mf_oracle(a, b, constant ? LinearTerminal::constant : LinearTerminal::brownian, c, T);
    const double ref = reference_at_window(run, o);
    if (constant) {
      out.push_back(y0_check("linear_mf_Y0", y0, ref, 0.01 * std::abs(ref), se, o.method));
    } else {
      out.push_back(y0_check("linear_mf_Y0", y0, ref, 0.02, se, o.method));
      const Solution& sol = run.solution();
      double num = 0.0;
      Index cnt = 0;
      for (Index k = run.window.first; k < run.window.last; ++k) {
        const double z = o.Z_path(run.paths->grid().node(k), 0.0);
        num += (sol.Z[static_cast<std::size_t>(k)].col(0).array() / z - 1.0).square().sum();
        cnt += sol.N;
      }
      out.push_back(oracle_check("linear_mf_Z_rms", std::sqrt(num / static_cast<double>(cnt)), 0.0, 0.05, o.method));
    }
  } else if (f.name == "volterra_demo" && f.spec.n == 1) {
    const double gamma = p["gamma"].get<double>();
    const std::string g = p["g"].get<std::string>();
    const OracleResult base = cole_hopf(f.scalar_terminal, gamma, T);
    if (g == "mean" && p["clamp"].get<double>() >= 0.5 * gamma * std::expm1(T)) {
      const OracleResult o = volterra_mean_oracle(gamma, T);
      out.push_back(y0_check("volterra_mean_Y0", y0, o.Y0, 0.02 * std::abs(o.Y0), se, o.method));
    } else if (g == "zero") {
      out.push_back(y0_check("volterra_zero_Y0", y0, base.Y0, std::max(0.02 * std::abs(base.Y0), 0.01), se, base.method));
    } else if (g == "one") {
      out.push_back(
          y0_check("volterra_one_Y0", y0, base.Y0 + T, 0.02 * std::abs(base.Y0 + T), se, base.method + " + (T - t)"));
    }
  }
  if (out.empty()) out.push_back({"oracle", "oracle", "not applicable", 0.0, 0.0, 0.0, "no closed form for " + f.name});
  return out;
}

/// Builds the JSON config from file and command-line overrides.
struct Overrides {
  std::string config;
  std::string fixture;
  std::string params;
  std::string scheme;
  std::string report;
  std::string csv;
  std::string dump;
  double T = 0.0;
  long long M = 0;
  long long N = 0;
  long long seed = -1;
};

json gather(const Overrides& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw SchemaError("cannot read config file " + o.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("config must be a JSON object");
  }
  if (!o.fixture.empty() || !o.params.empty()) {
    json fx = j.contains("fixture") ? j["fixture"] : json::object();
    if (fx.is_string()) fx = json{{"name", fx}};
    if (!o.fixture.empty()) fx["name"] = o.fixture;
    if (!o.params.empty()) {
      try {
        fx["params"] = json::parse(o.params);
      } catch (const json::parse_error& e) {
        throw SchemaError(std::string("--params is not valid JSON: ") + e.what());
      }
    }
    j["fixture"] = fx;
  }
  if (!o.scheme.empty()) j["scheme"] = o.scheme;
  if (o.T != 0.0) j["grid"]["T"] = o.T;
  if (o.M != 0) j["grid"]["M"] = o.M;
  if (o.N != 0) j["ensemble"]["N"] = o.N;
  if (o.seed >= 0) j["ensemble"]["seed"] = o.seed;
  if (!o.report.empty()) j["output"]["report"] = o.report;
  if (!o.csv.empty()) j["output"]["csv"] = o.csv;
  if (!o.dump.empty()) j["output"]["dump"] = o.dump;
  return j;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json base_report(const char* command, const RunConfig& cfg, const ProblemRun& run) {
  return {{"schema_version", 1},
          {"command", command},
          {"config", echo_config(cfg, run.fixture, run.scheme)},
          {"constants", constants_report(run.fixture, run.paths->grid().horizon())}};
}

void emit(const json& report, const std::string& path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (path.empty())
    out << text;
  else
    write_file(path, text);
}

int do_constants(const RunConfig& cfg, std::ostream& out) {
  const Fixture f = fixture(cfg.problem.fixture, cfg.problem.params);
  json j{{"schema_version", 1},
         {"command", "constants"},
         {"fixture", {{"name", f.name}, {"params", f.params}}},
         {"T", cfg.problem.T},
         {"constants", constants_report(f, cfg.problem.T)}};
  emit(j, cfg.output.report, out);
  return exit_ok;
}

int do_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err, bool verify) {
  const auto t0 = Clock::now();
  ProblemRun run = prepare(cfg.problem);
  const double t_prepare = seconds_since(t0);
  const auto t1 = Clock::now();
  json report = base_report(verify ? "verify" : "solve", cfg, run);
  try {
    run_scheme(run);
  } catch (const SolverDivergence& e) {
    report["status"] = "diverged";
    report["error"] = e.what();
    report["trace"] = trace_json(e.trace());
    report["timings"] = {{"prepare_s", t_prepare}, {"solve_s", seconds_since(t1)}};
    const std::string path = cfg.output.report.empty() ? std::string("mfbsde_divergence.json") : cfg.output.report;
    write_file(path, report.dump(2) + "\n");
    err << "solver diverged: " << e.what() << "\ntrace written to " << path << "\n";
    return exit_divergence;
  }
  const double t_solve = seconds_since(t1);
  const auto t2 = Clock::now();

  report["status"] = "converged";
  report["result"] = result_json(run);
  json bounds = json::array();
  for (const auto& b : bound_reports(run)) bounds.push_back(to_json(b));
  report["bounds"] = bounds;

  int code = exit_ok;
  if (verify) {
    std::vector<Check> checks = oracle_checks(run);
    for (const auto& b : bound_reports(run))
      checks.push_back({b.name, "diagnostic", b.skipped ? "skipped" : (b.satisfied ? "pass" : "fail"), b.observed,
                        b.bound, b.slack, b.note});
    checks.push_back({"converged", "diagnostic", run.trace().converged ? "pass" : "fail",
                      static_cast<double>(run.trace().iterations()), 0.0, 0.0, ""});
    json rows = json::array();
    out << std::left << std::setw(24) << "check" << std::setw(12) << "kind" << std::setw(16) << "status"
        << std::setw(16) << "observed" << "reference\n";
    for (const auto& c : checks) {
      rows.push_back(check_json(c));
      out << std::setw(24) << c.name << std::setw(12) << c.kind << std::setw(16) << c.status << std::setw(16)
          << std::setprecision(6) << c.observed << c.reference << "\n";
      if (c.status == "fail") code = exit_mismatch;
    }
    report["checks"] = rows;
  }
  report["timings"] = {{"prepare_s", t_prepare}, {"solve_s", t_solve}, {"diagnostics_s", seconds_since(t2)}};

  if (!cfg.output.report.empty() || !verify) emit(report, cfg.output.report, out);
  if (!cfg.output.csv.empty()) write_file(cfg.output.csv, summary_csv(run));
  if (!cfg.output.dump.empty()) dump_solution(run.solution(), cfg.output.dump);
  return code;
}

int do_refine(const RunConfig& cfg, std::ostream& out) {
  const Problem& p = cfg.problem;
  const Index factor = Index{1} << (cfg.refine_levels - 1);
  const Fixture f = fixture(p.fixture, p.params);
  SamplingOptions sampling;
  sampling.antithetic = p.antithetic;
  const PathEnsemble finest = sample_brownian(build_grid(p.T, p.M * factor), p.N, f.spec.d, p.seed, sampling);
  json levels = json::array();
  std::optional<double> reference;
  if (f.name == "pure_quadratic") reference = cole_hopf(f.scalar_terminal, f.params["gamma"].get<double>(), p.T).Y0;
  for (Index level = 0; level < cfg.refine_levels; ++level) {
    const Index coarsen = factor >> level;
    ProblemRun run = prepare(p, coarsen == 1 ? finest : finest.coarsen(coarsen));
    run_scheme(run);
    json l{{"M", run.paths->grid().steps()}, {"Y0", jnum(run.Y0()[0])}};
    if (reference) l["abs_error"] = jnum(std::abs(run.Y0()[0] - *reference));
    levels.push_back(l);
  }
  json j{{"schema_version", 1},
         {"command", "refine"},
         {"config", echo_config(cfg, f, p.scheme.empty() ? f.default_scheme : p.scheme)},
         {"levels", levels}};
  if (reference) j["reference"] = *reference;
  emit(j, cfg.output.report, out);
  return exit_ok;
}

}  // namespace

RunConfig parse_config(const json& c) {
  only_keys(c, {"fixture", "scheme", "grid", "ensemble", "basis", "solver", "output", "refine"}, "config");
  RunConfig cfg;
  Problem& p = cfg.problem;

  if (!c.contains("fixture")) throw SchemaError("config.fixture is required");
  const json& fx = c["fixture"];
  if (fx.is_string()) {
    p.fixture = fx.get<std::string>();
  } else {
    only_keys(fx, {"name", "params"}, "fixture");
    p.fixture = get_string(fx, "name", "", "fixture");
    if (p.fixture.empty()) throw SchemaError("fixture.name is required");
    if (fx.contains("params")) {
      if (!fx["params"].is_object()) throw SchemaError("fixture.params must be an object");
      p.params = fx["params"];
    }
  }
  p.scheme = get_string(c, "scheme", "", "config");

  const json grid = section(c, "grid");
  only_keys(grid, {"T", "M"}, "grid");
  p.T = get_number(grid, "T", p.T, "grid");
  p.M = get_count(grid, "M", p.M, "grid");
  if (!(p.T > 0.0) || !std::isfinite(p.T)) throw SchemaError("grid.T must be positive");

  const json ens = section(c, "ensemble");
  only_keys(ens, {"N", "seed", "antithetic"}, "ensemble");
  p.N = get_count(ens, "N", p.N, "ensemble");
  if (ens.contains("seed")) {
    if (!ens["seed"].is_number_integer() || (ens["seed"].is_number_integer() && !ens["seed"].is_number_unsigned() &&
                                             ens["seed"].get<long long>() < 0))
      throw SchemaError("ensemble.seed must be a nonnegative integer");
    p.seed = ens["seed"].get<std::uint64_t>();
  }
  p.antithetic = get_bool(ens, "antithetic", p.antithetic, "ensemble");

  const json basis = section(c, "basis");
  only_keys(basis, {"kind", "degree", "bins"}, "basis");
  const std::string kind = get_string(basis, "kind", "polynomial", "basis");
  if (kind == "polynomial") {
    p.basis = RegressionBasis::polynomial(static_cast<int>(get_count(basis, "degree", 3, "basis")));
    if (basis.contains("bins")) throw SchemaError("basis.bins applies to the piecewise basis only");
  } else if (kind == "piecewise") {
    p.basis = RegressionBasis::piecewise(static_cast<int>(get_count(basis, "bins", 50, "basis")));
    if (basis.contains("degree")) throw SchemaError("basis.degree applies to the polynomial basis only");
  } else {
    throw SchemaError("basis.kind must be 'polynomial' or 'piecewise'");
  }

  const json s = section(c, "solver");
  only_keys(s,
            {"tol", "max_iter", "z_clip", "inner_sweeps", "theta", "law_source", "init_offset", "window_steps",
             "max_halvings"},
            "solver");
  SchemeOptions& o = p.options;
  o.tol = get_number(s, "tol", o.tol, "solver");
  o.max_iter = get_count(s, "max_iter", o.max_iter, "solver");
  if (s.contains("z_clip") && !s["z_clip"].is_null()) {
    if (s["z_clip"].is_string() && s["z_clip"].get<std::string>() == "inf")
      o.z_clip = std::numeric_limits<double>::infinity();
    else
      o.z_clip = get_number(s, "z_clip", o.z_clip, "solver");
  }
  o.inner_sweeps = static_cast<int>(get_count(s, "inner_sweeps", o.inner_sweeps, "solver"));
  o.theta = get_number(s, "theta", o.theta, "solver");
  const std::string law = get_string(s, "law_source", "previous", "solver");
  if (law != "previous" && law != "fresh") throw SchemaError("solver.law_source must be 'previous' or 'fresh'");
  o.law_source = law == "fresh" ? LawSource::fresh : LawSource::previous;
  o.init_offset = get_number(s, "init_offset", o.init_offset, "solver");
  if (s.contains("window_steps")) {
    if (!s["window_steps"].is_number_integer() || s["window_steps"].get<long long>() < 0)
      throw SchemaError("solver.window_steps must be a nonnegative integer");
    o.window_steps = static_cast<Index>(s["window_steps"].get<long long>());
  }
  if (s.contains("max_halvings")) {
    if (!s["max_halvings"].is_number_integer() || s["max_halvings"].get<long long>() < 0)
      throw SchemaError("solver.max_halvings must be a nonnegative integer");
    o.max_halvings = static_cast<int>(s["max_halvings"].get<long long>());
  }
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }

  const json out = section(c, "output");
  only_keys(out, {"report", "csv", "dump"}, "output");
  cfg.output.report = get_string(out, "report", "", "output");
  cfg.output.csv = get_string(out, "csv", "", "output");
  cfg.output.dump = get_string(out, "dump", "", "output");

  const json refine = section(c, "refine");
  only_keys(refine, {"levels"}, "refine");
  cfg.refine_levels = static_cast<int>(get_count(refine, "levels", 3, "refine"));
  if (cfg.refine_levels > 6) throw SchemaError("refine.levels must be at most 6");

  // Fixture parameters and the scheme/certificate pairing are schema too.
  Fixture f;
  try {
    f = fixture(p.fixture, p.params);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  const std::string scheme = p.scheme.empty() ? f.default_scheme : p.scheme;
  const bool ok = (scheme == "local" && f.local) || (scheme == "global" && f.global) || (scheme == "theta" && f.convex) ||
                  (scheme == "volterra" && f.volterra && f.g && f.convex);
  if (!ok) throw SchemaError("scheme '" + scheme + "' is unknown or not certified for fixture " + f.name);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  Overrides o;
  o.config = path;
  return parse_config(gather(o));
}

json echo_config(const RunConfig& cfg, const Fixture& f, const std::string& scheme) {
  const Problem& p = cfg.problem;
  json basis = p.basis.kind == RegressionBasis::Kind::polynomial ? json{{"kind", "polynomial"}, {"degree", p.basis.degree}}
                                                                  : json{{"kind", "piecewise"}, {"bins", p.basis.bins}};
  json output = json::object();
  if (!cfg.output.report.empty()) output["report"] = cfg.output.report;
  if (!cfg.output.csv.empty()) output["csv"] = cfg.output.csv;
  if (!cfg.output.dump.empty()) output["dump"] = cfg.output.dump;
  return {{"fixture", {{"name", f.name}, {"params", f.params}}},
          {"scheme", scheme},
          {"grid", {{"T", p.T}, {"M", p.M}}},
          {"ensemble", {{"N", p.N}, {"seed", p.seed}, {"antithetic", p.antithetic}}},
          {"basis", basis},
          {"solver", solver_json(p.options)},
          {"output", output},
          {"refine", {{"levels", cfg.refine_levels}}}};
}

json constants_report(const Fixture& f, double T) {
  const Index n = f.spec.n;
  json j = json::object();
  if (f.local) {
    j["local"] = local_json(local_window(*f.local, n));
  }
  if (f.global) {
    const GlobalConstants g = global_ode(*f.global, n, T);
    j["global"] = {{"C_tilde", jnum(g.C_tilde)},
                   {"eta_a", jnum(g.eta.a)},
                   {"eta_b", jnum(g.eta.b)},
                   {"eta_T", jnum(g.eta(T))},
                   {"eta_0", jnum(g.kappa)},
                   {"kappa", jnum(g.kappa)},
                   {"log_kappa", jnum(g.log_kappa)},
                   {"delta_kappa", jnum(g.delta_kappa)},
                   {"log_delta_kappa", jnum(g.log_delta_kappa)},
                   {"J1", jnum(g.J1)},
                   {"J2", jnum(g.J2)},
                   {"log_J2", jnum(g.log_J2)},
                   {"window", local_json(g.window)}};
  }
  if (f.convex) {
    const ThetaConstants t = theta_consts(*f.convex, n, T, 2.0);
    j["theta"] = {{"q", t.q},
                  {"R_of_q", jnum(t.R_of_q)},
                  {"m0", t.m0 ? json(*t.m0) : json(nullptr)},
                  {"eps_star", t.eps_star ? jnum(*t.eps_star) : json(nullptr)},
                  {"n0", t.n0 ? json(*t.n0) : json(nullptr)}};
  }
  if (f.volterra) j["volterra"] = {{"C", jnum(f.volterra->C)}, {"beta", jnum(volterra_weight(f.volterra->C, T))}};
  return j;
}

std::string summary_csv(const ProblemRun& run) {
  const Solution& sol = run.solution();
  const TimeGrid& grid = sol.grid;
  const Index M = grid.steps();
  std::ostringstream os;
  os << "t";
  for (Index i = 0; i < sol.n; ++i) os << ",mean_abs_Y_" << (i + 1);
  os << ",max_abs_Y,bmo\n";
  // BMO estimate from node k: sqrt(max_p E_k[Σ_{j≥k}|Z_j|²Δt]).
  Eigen::VectorXd bmo = Eigen::VectorXd::Zero(M + 1);
  Eigen::VectorXd cum = Eigen::VectorXd::Zero(sol.N);
  for (Index k = M - 1; k >= 0; --k) {
    cum += grid.dt() * sol.Z[static_cast<std::size_t>(k)].rowwise().squaredNorm();
    bmo[k] = std::sqrt(std::max(0.0, run.engine->project(k, cum).maxCoeff()));
  }
  for (Index k = 0; k <= M; ++k) {
    const Eigen::MatrixXd& Y = sol.Y[static_cast<std::size_t>(k)];
    os << fmt(grid.node(k));
    for (Index i = 0; i < sol.n; ++i) os << "," << fmt(Y.col(i).cwiseAbs().mean());
    os << "," << fmt(Y.rowwise().norm().maxCoeff()) << "," << fmt(bmo[k]) << "\n";
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field diagonally quadratic BSDE solver"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "JSON configuration file");
    sub->add_option("--fixture", o.fixture, "fixture name (overrides the config)");
    sub->add_option("--params", o.params, "fixture parameters as a JSON object");
    sub->add_option("--T", o.T, "horizon");
    sub->add_option("--M", o.M, "time steps");
    sub->add_option("--N", o.N, "particles");
    sub->add_option("--seed", o.seed, "ensemble seed");
    sub->add_option("--report", o.report, "JSON report path (stdout when omitted)");
  };
  CLI::App* constants = app.add_subcommand("constants", "print the certificate constants as JSON");
  add_common(constants);
  std::vector<CLI::App*> solving;
  for (const char* name : {"solve", "verify", "refine"}) {
    CLI::App* sub = app.add_subcommand(name, std::string(name) + " a configured problem");
    add_common(sub);
    sub->add_option("--scheme", o.scheme, "local, global, theta or volterra");
    sub->add_option("--csv", o.csv, "per-node CSV summary path");
    sub->add_option("--dump", o.dump, "binary solution dump path");
    solving.push_back(sub);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return exit_schema;
  }

  RunConfig cfg;
  try {
    json j = gather(o);
    if (constants->parsed() && !j.contains("fixture") && o.fixture.empty()) throw SchemaError("a fixture is required");
    if (!j.contains("fixture")) j["fixture"] = "pure_quadratic";
    cfg = parse_config(j);
  } catch (const SchemaError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_schema;
  }

  try {
    if (constants->parsed()) return do_constants(cfg, out);
    if (solving[0]->parsed()) return do_solve(cfg, out, err, false);
    if (solving[1]->parsed()) return do_solve(cfg, out, err, true);
    return do_refine(cfg, out);
  } catch (const SolverDivergence& e) {
    err << "solver diverged: " << e.what() << "\n";
    return exit_divergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_failure;
  }
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace mfbsde::cli
