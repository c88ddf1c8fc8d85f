#pragma once

#include "mfbsde/generators.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace mfbsde {

/// M_{n,λ,α} = (1−α)/2 · (1+α)^{(1+α)/(1−α)} · (nλ)^{2/(1−α)}.
template <typename Scalar>
Scalar m_const(Index n, Scalar lambda, Scalar alpha) {
  using std::pow;
  if (!(alpha >= Scalar(0)) || !(alpha < Scalar(1))) throw std::invalid_argument("m_const: alpha must lie in [0,1)");
  if (n < 1 || !(lambda > Scalar(0))) throw std::invalid_argument("m_const: need n >= 1 and lambda > 0");
  const Scalar one(1);
  return (one - alpha) / Scalar(2) * pow(one + alpha, (one + alpha) / (one - alpha)) *
         pow(Scalar(n) * lambda, Scalar(2) / (one - alpha));
}

struct Phi {
  double value;
  double d1;
  double d2;
};

/// φ(x) = (e^{γ|x|} − γ|x| − 1)/γ², with φ′ = (e^{γ|x|} − 1) sgn(x)/γ and
/// φ″ = e^{γ|x|}. sgn(0) = −1, as the definition of φ′ states; φ′(0) = 0
/// either way.
template <typename Scalar>
Phi phi(Scalar gamma, Scalar x) {
  using std::abs;
  using std::expm1;
  if (!(gamma > Scalar(0))) throw std::invalid_argument("phi: gamma must be positive");
  const Scalar a = gamma * abs(x);
  const Scalar e = expm1(a);
  const Scalar sgn = x > Scalar(0) ? Scalar(1) : Scalar(-1);
  return {static_cast<double>((e - a) / (gamma * gamma)), static_cast<double>(e * sgn / gamma),
          static_cast<double>(e + Scalar(1))};
}

struct LocalConstants {
  double M_nla = 0.0;
  double K1 = 0.0;
  double K2 = 0.0;
  double log_K2 = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double eps = 0.0;
  double log_x1 = 0.0;
  double log_x2 = 0.0;
  double log_eps = 0.0;
  /// |left/right − 1| at the returned roots.
  double residual1 = 0.0;
  double residual2 = 0.0;
};

struct LocalRadii {
  double K1;
  double K2;
  double log_K2;
};

LocalRadii local_radii(const CertificateLocal& cert, Index n);

/// The window equations, solved in log x so that roots far below the double
/// range are still located; eps = min(x1, x2).
LocalConstants local_window(const CertificateLocal& cert, Index n);

/// Left side of the x1 (which = 1) or x2 (which = 2) window equation at x.
double window_lhs(const CertificateLocal& cert, Index n, int which, double x);
/// Right side of the same equation.
double window_rhs(const CertificateLocal& cert, Index n, int which);

/// η(t) = (nC̃ + b/a) e^{a(T−t)} − b/a, a = C̃(2n+1), b = nC̃.
struct EtaOde {
  double a = 0.0;
  double b = 0.0;
  double terminal = 0.0;
  double T = 0.0;

  double operator()(double t) const;
  double log_value(double t) const;
};

struct GlobalConstants {
  double C_tilde = 0.0;
  EtaOde eta;
  double kappa = 0.0;
  double log_kappa = 0.0;
  /// The local theorem applied with ‖ξ‖_∞ ≤ √κ.
  CertificateLocal window_certificate;
  LocalConstants window;
  double delta_kappa = 0.0;
  double log_delta_kappa = 0.0;
  double J1 = 0.0;
  double J2 = 0.0;
  double log_J2 = 0.0;
};

/// The local certificate implied by a global one with terminal bound M1:
/// ψ_loc(x) = ψ(x) + Lx, ψ0_loc(x) = Lx, M2 = √(T·M3), α = 0.
CertificateLocal local_from_global(const CertificateGlobal& cert, double M1, double T);

GlobalConstants global_ode(const CertificateGlobal& cert, Index n, double T);

struct ThetaConstants {
  double q = 2.0;
  double R_of_q = 0.0;
  std::optional<long long> m0;
  std::optional<double> eps_star;
  std::optional<long long> n0;
};

/// R(q) = (q/(q−1))^{2q}.
double R_of_q(double q);

ThetaConstants theta_consts(const CertificateConvex& cert, Index n, double T, double q);

/// β = 32C²T.
double volterra_weight(double C, double T);

}  // namespace mfbsde
