#include "mfbsde/oracles.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace mfbsde {

GaussHermite gauss_hermite(int points) {
  if (points < 1) throw std::invalid_argument("gauss_hermite: need at least one point");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(points, points);
  for (int k = 1; k < points; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().array().square();
  return gh;
}

namespace {

/// log E[exp(γ g(w + √s Z))] by the rule, with the largest term's share.
struct Quadrature {
  double log_mean;
  double max_share;
};

Quadrature gh_log_mean(const GaussHermite& gh, const std::function<double(double)>& g, double gamma, double w,
                       double s) {
  const Index P = gh.nodes.size();
  Eigen::VectorXd terms(P);
  for (Index j = 0; j < P; ++j)
    terms[j] = std::log(gh.weights[j] / std::sqrt(std::numbers::pi)) + gamma * g(w + std::sqrt(2.0 * s) * gh.nodes[j]);
  if (!terms.allFinite()) throw OracleRefusal("cole_hopf: terminal is not finite at a quadrature node");
  const double top = terms.maxCoeff();
  const double sum = (terms.array() - top).exp().sum();
  return {top + std::log(sum), 1.0 / sum};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// log of the sample mean of exp(v[0..n)) and the standard error of that log.
std::pair<double, double> log_mean_exp(const Eigen::VectorXd& v, Index n) {
  const auto head = v.head(n);
  const double top = head.maxCoeff();
  const Eigen::ArrayXd e = (head.array() - top).exp();
  const double mean = e.mean();
  const double var = (e - mean).square().sum() / static_cast<double>(n - 1);
  return {top + std::log(mean), std::sqrt(var / static_cast<double>(n)) / mean};
}

}  // namespace

OracleResult cole_hopf(const std::function<double(double)>& g, double gamma, double T, const ColeHopfOptions& opts) {
  if (!g) throw std::invalid_argument("cole_hopf: terminal function required");
  if (!(gamma > 0.0) || !(T > 0.0)) throw std::invalid_argument("cole_hopf: need gamma > 0 and T > 0");
  OracleResult out;
  if (opts.method == ColeHopfMethod::gauss_hermite) {
    if (opts.points < 4) throw std::invalid_argument("cole_hopf: need at least 4 quadrature points");
    const GaussHermite fine = gauss_hermite(opts.points);
    const GaussHermite coarse = gauss_hermite(opts.points / 2);
    const Quadrature qf = gh_log_mean(fine, g, gamma, 0.0, T);
    const Quadrature qc = gh_log_mean(coarse, g, gamma, 0.0, T);
    out.Y0 = qf.log_mean / gamma;
    out.error_bar = std::abs(qf.log_mean - qc.log_mean) / gamma;
    if (out.error_bar > 1e-2 * (1.0 + std::abs(out.Y0)) || qf.max_share > 0.5)
      throw OracleRefusal("cole_hopf: quadrature does not settle; exp(gamma*g) may not be integrable");
    out.method = "gauss_hermite_" + std::to_string(opts.points);
    out.Y_path = [g, gamma, T, fine](double t, double w) {
      const double s = std::max(T - t, 0.0);
      if (s == 0.0) return g(w);
      return gh_log_mean(fine, g, gamma, w, s).log_mean / gamma;
    };
    return out;
  }

  if (opts.N < 64) throw std::invalid_argument("cole_hopf: Monte Carlo needs at least 64 samples");
  std::mt19937_64 gen(splitmix64(opts.seed));
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(opts.N);
  const double sd = std::sqrt(T);
  for (Index p = 0; p < opts.N; ++p) v[p] = gamma * g(sd * normal(gen));
  if (!v.allFinite()) throw OracleRefusal("cole_hopf: terminal produced non-finite samples");
  const auto [lm, se] = log_mean_exp(v, opts.N);
  const auto [lm_half, se_half] = log_mean_exp(v, opts.N / 2);
  const double share = std::exp(v.maxCoeff() - lm) / static_cast<double>(opts.N);
  if (share > 0.05 || std::abs(lm - lm_half) > 5.0 * se_half + 1e-12)
    throw OracleRefusal("cole_hopf: exponential moment is unstable under sample doubling");
  out.Y0 = lm / gamma;
  out.error_bar = se / gamma;
  out.method = "monte_carlo";
  return out;
}

OracleResult linear_mf_oracle(double a, double b, LinearTerminal terminal, double c, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("linear_mf_oracle: T must be positive");
  OracleResult out;
  out.method = "linear_closed_form";
  if (terminal == LinearTerminal::constant) {
    out.Y0 = c * std::exp((a + b) * T);
    out.Y_path = [a, b, c, T](double t, double) { return c * std::exp((a + b) * (T - t)); };
    out.Z_path = [](double, double) { return 0.0; };
  } else {
    out.Y0 = 0.0;
    out.Y_path = [a, T](double t, double w) { return std::exp(a * (T - t)) * w; };
    out.Z_path = [a, T](double t, double) { return std::exp(a * (T - t)); };
  }
  return out;
}

OracleResult volterra_mean_oracle(double gamma, double T) {
  if (!(gamma > 0.0) || !(T > 0.0)) throw std::invalid_argument("volterra_mean_oracle: need gamma > 0 and T > 0");
  OracleResult out;
  out.method = "volterra_mean_closed_form";
  out.Y0 = 0.5 * gamma * std::expm1(T);
  return out;
}

OracleResult dense_reference(const Problem& problem, int r, const DenseOptions& opts) {
  if (r != 2 && r != 4) throw std::invalid_argument("dense_reference: r must be 2 or 4");
  const double cost = static_cast<double>(problem.N * r) * static_cast<double>(problem.M * r);
  if (cost > opts.budget)
    throw BudgetExceeded("dense_reference: " + std::to_string(cost) + " particle-steps exceed the budget of " +
                         std::to_string(opts.budget));
  Problem dense = problem;
  dense.N *= r;
  dense.M *= r;
  dense.seed = splitmix64(problem.seed ^ (0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(r)));
  if (dense.options.window_steps > 0) dense.options.window_steps *= r;
  const ProblemRun run = solve_problem(dense);

  OracleResult out;
  out.Y0 = run.Y0()[0];
  out.method = "dense_reference_r" + std::to_string(r);
  out.error_bar = batch_standard_error(dense, *run.paths, opts.batches);
  return out;
}

double batch_standard_error(const Problem& problem, const PathEnsemble& paths, int batches) {
  if (batches < 2) throw std::invalid_argument("batch_standard_error: need at least two batches");
  const Index size = (paths.particles() / batches) & ~Index{1};
  if (size < 16) throw std::invalid_argument("batch_standard_error: too few particles per batch");
  Eigen::VectorXd values(batches);
  std::vector<Index> rows(static_cast<std::size_t>(size));
  for (int b = 0; b < batches; ++b) {
    std::iota(rows.begin(), rows.end(), b * size);
    ProblemRun run = prepare(problem, paths.select(rows));
    run_scheme(run);
    values[b] = run.Y0()[0];
  }
  const double sd = std::sqrt((values.array() - values.mean()).square().sum() / (batches - 1));
  // Each batch holds 1/batches of the particles.
  return sd / std::sqrt(static_cast<double>(batches));
}

}  // namespace mfbsde
