#pragma once

#include "mfbsde/problem.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace mfbsde {

struct OracleResult {
  double Y0 = 0.0;
  std::string method;
  double error_bar = 0.0;
  /// Y_t as a function of (t, W_t), when the oracle provides it.
  std::function<double(double t, double w)> Y_path;
  /// Z_t as a function of (t, W_t), when the oracle provides it.
  std::function<double(double t, double w)> Z_path;
};

/// The oracle declines to answer: the terminal looks non-integrable.
class OracleRefusal : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Nodes and weights of the n-point Gauss–Hermite rule for ∫ e^{−x²} f(x) dx,
/// from the eigen-decomposition of the Jacobi matrix.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussHermite gauss_hermite(int points);

enum class ColeHopfMethod { gauss_hermite, monte_carlo };

struct ColeHopfOptions {
  ColeHopfMethod method = ColeHopfMethod::gauss_hermite;
  int points = 64;
  Index N = Index{1} << 21;
  std::uint64_t seed = 7;
};

/// Y_0 = (1/γ) log E[exp(γ g(W_T))] for a scalar terminal g of one Brownian
/// coordinate. Y_path evaluates (1/γ) log E[exp(γ g(w + W_{T−t}))].
OracleResult cole_hopf(const std::function<double(double)>& g, double gamma, double T,
                       const ColeHopfOptions& opts = {});

enum class LinearTerminal { constant, brownian };

/// f = a·y + b·E[y]. Constant terminal c: Y ≡ c e^{(a+b)(T−t)}. Terminal W_T:
/// E[Y] ≡ 0, Y_t = e^{a(T−t)} W_t and Z_t = e^{a(T−t)}.
OracleResult linear_mf_oracle(double a, double b, LinearTerminal terminal, double c, double T);

/// Volterra demo with g = E[Y_s] (clamp inactive), f = γ/2|z|², ξ = W_T:
/// m(t) = E[Y_t] solves m′ = −γ/2 − m, m(T) = 0, so Y_0 = (γ/2)(e^T − 1).
OracleResult volterra_mean_oracle(double gamma, double T);

class BudgetExceeded : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DenseOptions {
  /// Upper bound on (N·r)·(M·r).
  double budget = 1 << 27;
  int batches = 4;
};

/// Monte Carlo standard error of Y_0 by batch means: the ensemble is split
/// into contiguous particle blocks, each block is solved on its own, and the
/// spread of the block values is scaled to the full ensemble. Antithetic
/// pairs stay within one block.
double batch_standard_error(const Problem& problem, const PathEnsemble& paths, int batches = 4);

/// Re-solves with M·r steps and N·r particles on a fresh noise stream, with
/// the batch-means standard error as error bar.
OracleResult dense_reference(const Problem& problem, int r, const DenseOptions& opts = {});

}  // namespace mfbsde
