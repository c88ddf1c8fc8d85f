#include "mfbsde/constants.hpp"

#include <algorithm>
#include <limits>

namespace mfbsde {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double logsumexp3(double a, double b, double c) {
  const double m = std::max({a, b, c});
  if (m == kNegInf) return kNegInf;
  return m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(c - m));
}

/// Log-coefficients of one window equation: e^{la}x + e^{lb}x^β + e^{lc}x = e^{lr}.
struct WindowEquation {
  double la, lb, lc, lr, beta;
};

WindowEquation window_equation(const CertificateLocal& c, Index n, int which) {
  const LocalRadii r = local_radii(c, n);
  const double a = c.alpha;
  const double p = (1.0 + a) / (1.0 - a);
  const double M = m_const<double>(n, c.lambda, a);
  const double psum = c.psi(r.K1) + c.psi0(r.K1);
  const double nn = static_cast<double>(n);
  WindowEquation e{};
  e.beta = (1.0 - a) / 2.0;
  if (which == 1) {
    e.la = safe_log(nn * psum);
    e.lb = std::log(nn * c.gamma0) + 0.5 * (1.0 + a) * r.log_K2;
    e.lc = std::log(nn) + p * std::log(c.gamma) + std::log(M) + p * r.log_K2;
    e.lr = std::log(r.K1 / 2.0);
  } else if (which == 2) {
    e.la = safe_log(2.0 * psum);
    e.lb = std::log(2.0 * c.gamma0) + 0.5 * (1.0 + a) * r.log_K2;
    e.lc = std::log(2.0 * M) + p * r.log_K2;
    // γK2/(2n)·e^{−2γK1} expanded term by term, which stays finite when K2
    // itself overflows.
    e.lr = std::log(std::exp(2.0 * c.gamma * (c.M1 - r.K1)) / c.gamma + 1.0 + 2.0 * c.M2);
  } else {
    throw std::invalid_argument("window equation index must be 1 or 2");
  }
  return e;
}

struct Root {
  double log_x;
  double residual;
};

/// Bisection in u = log x on F(u) = log(lhs) − log(rhs), which is strictly
/// increasing. Coefficients are shifted so the root sits near v = 0.
Root solve_window(const WindowEquation& e) {
  const double ta = e.la - e.lr, tb = e.lb - e.lr, tc = e.lc - e.lr;
  // Each term alone would put the root at −t; the true root is below all.
  const double u_ref = std::min({-ta, -tb / e.beta, -tc});
  const double pa = ta + u_ref, pb = tb + e.beta * u_ref, pc = tc + u_ref;
  auto F = [&](double v) { return logsumexp3(pa + v, pb + e.beta * v, pc + v); };
  double lo = -1.0, hi = 1.0;
  int doublings = 0;
  while (F(lo) > 0.0) {
    lo *= 2.0;
    if (++doublings > 60) throw std::runtime_error("local_window: no sign change in bracket");
  }
  while (F(hi) < 0.0) {
    hi *= 2.0;
    if (++doublings > 120) throw std::runtime_error("local_window: no sign change in bracket");
  }
  for (int it = 0; it < 400 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (F(mid) < 0.0 ? lo : hi) = mid;
  }
  const double v = std::abs(F(lo)) <= std::abs(F(hi)) ? lo : hi;
  return {u_ref + v, std::abs(std::expm1(F(v)))};
}

}  // namespace

LocalRadii local_radii(const CertificateLocal& c, Index n) {
  c.validate();
  if (n < 1) throw std::invalid_argument("local_radii: n must be positive");
  const double nn = static_cast<double>(n);
  const double K1 = 2.0 * nn / c.gamma * std::log(2.0) + 2.0 * nn * (c.M1 + c.M2);
  const double t1 = std::log(2.0 * nn / (c.gamma * c.gamma)) + 2.0 * c.gamma * c.M1;
  const double t2 = std::log(2.0 * nn / c.gamma) + 2.0 * c.gamma * K1 + std::log1p(2.0 * c.M2);
  const double m = std::max(t1, t2);
  const double log_K2 = m + std::log(std::exp(t1 - m) + std::exp(t2 - m));
  return {K1, std::exp(log_K2), log_K2};
}

double window_lhs(const CertificateLocal& c, Index n, int which, double x) {
  const WindowEquation e = window_equation(c, n, which);
  if (x <= 0.0) return 0.0;
  return std::exp(e.la) * x + std::exp(e.lb) * std::pow(x, e.beta) + std::exp(e.lc) * x;
}

double window_rhs(const CertificateLocal& c, Index n, int which) { return std::exp(window_equation(c, n, which).lr); }

LocalConstants local_window(const CertificateLocal& c, Index n) {
  const LocalRadii r = local_radii(c, n);
  LocalConstants out;
  out.M_nla = m_const<double>(n, c.lambda, c.alpha);
  out.K1 = r.K1;
  out.K2 = r.K2;
  out.log_K2 = r.log_K2;
  const Root r1 = solve_window(window_equation(c, n, 1));
  const Root r2 = solve_window(window_equation(c, n, 2));
  out.log_x1 = r1.log_x;
  out.log_x2 = r2.log_x;
  out.log_eps = std::min(r1.log_x, r2.log_x);
  out.x1 = std::exp(r1.log_x);
  out.x2 = std::exp(r2.log_x);
  out.eps = std::exp(out.log_eps);
  out.residual1 = r1.residual;
  out.residual2 = r2.residual;
  return out;
}

double EtaOde::operator()(double t) const { return (terminal + b / a) * std::exp(a * (T - t)) - b / a; }

double EtaOde::log_value(double t) const {
  const double c = terminal + b / a;
  return a * (T - t) + std::log(c) + std::log1p(-(b / a) * std::exp(-a * (T - t)) / c);
}

CertificateLocal local_from_global(const CertificateGlobal& g, double M1, double T) {
  g.validate();
  CertificateLocal c;
  c.gamma = g.gamma;
  c.lambda = g.lambda;
  c.gamma0 = g.gamma0;
  c.alpha = 0.0;
  c.M1 = M1;
  c.M2 = std::sqrt(T * g.M3);
  c.zeta = g.zeta;
  // Lx ≤ L(1 + x^r) for r ≥ 1, so the monomial stays a majorant.
  c.psi = {g.psi.c0 + (g.psi.r == 1.0 ? 0.0 : g.L), g.psi.c1 + g.L, g.psi.r};
  c.psi0 = {0.0, g.L, 1.0};
  return c;
}

GlobalConstants global_ode(const CertificateGlobal& cert, Index n, double T) {
  cert.validate();
  if (n < 1 || !(T > 0.0)) throw std::invalid_argument("global_ode: need n >= 1 and T > 0");
  const double nn = static_cast<double>(n);
  GlobalConstants g;
  g.C_tilde = cert.M1 * cert.M1 + cert.M3 + 3.0 * cert.L * cert.L + 2.0;
  g.eta = {g.C_tilde * (2.0 * nn + 1.0), nn * g.C_tilde, nn * g.C_tilde, T};
  g.kappa = g.eta(0.0);
  g.log_kappa = g.eta.log_value(0.0);

  const double sqrt_kappa = std::exp(0.5 * g.log_kappa);
  g.J1 = sqrt_kappa;
  g.window_certificate = local_from_global(cert, sqrt_kappa, T);
  if (std::isfinite(sqrt_kappa)) {
    g.window = local_window(g.window_certificate, n);
    g.delta_kappa = g.window.eps;
    g.log_delta_kappa = g.window.log_eps;
  } else {
    g.delta_kappa = 0.0;
    g.log_delta_kappa = kNegInf;
  }

  const Phi pm = phi(cert.gamma, cert.M1);
  // log φ′(J1) = log(e^{γJ1} − 1) − log γ.
  const double gj = cert.gamma * g.J1;
  const double log_dphi = (gj > 30.0 ? gj + std::log1p(-std::exp(-gj)) : std::log(std::expm1(gj))) - std::log(cert.gamma);
  const double tail = std::sqrt(T * cert.M3) + 2.0 * cert.L * g.J1 * T;
  const double a = safe_log(2.0 * nn * pm.value);
  const double b = std::log(2.0 * nn) + log_dphi + safe_log(tail);
  const double m = std::max(a, b);
  g.log_J2 = m == kNegInf ? kNegInf : m + std::log(std::exp(a - m) + std::exp(b - m));
  g.J2 = std::exp(g.log_J2);
  return g;
}

double R_of_q(double q) {
  if (!(q > 1.0)) throw std::invalid_argument("R_of_q: q must exceed 1");
  return std::pow(q / (q - 1.0), 2.0 * q);
}

ThetaConstants theta_consts(const CertificateConvex& cert, Index n, double T, double q) {
  cert.validate(n);
  if (!(T > 0.0)) throw std::invalid_argument("theta_consts: T must be positive");
  ThetaConstants t;
  t.q = q;
  t.R_of_q = R_of_q(q);
  if (cert.K > 0.0) {
    const double nn = static_cast<double>(n);
    t.m0 = std::max(1LL, static_cast<long long>(std::ceil(4.0 * nn * cert.K * T)));
    t.eps_star = 1.0 / (16.0 * nn * cert.K);
    t.n0 = std::max(1LL, static_cast<long long>(std::ceil(16.0 * nn * cert.K * T)));
  }
  return t;
}

double volterra_weight(double C, double T) {
  if (!(C >= 0.0) || !(T > 0.0)) throw std::invalid_argument("volterra_weight: need C >= 0 and T > 0");
  return 32.0 * C * C * T;
}

}  // namespace mfbsde
