#include "mfbsde/generators.hpp"
#include "mfbsde/solution.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace mfbsde {

namespace {

using json = nlohmann::json;

/// Defaults merged with user parameters; unknown keys are rejected.
class Params {
public:
  Params(const std::string& fixture, const json& given, json defaults) : values_(std::move(defaults)) {
    if (!given.is_null() && !given.is_object())
      throw std::invalid_argument("fixture " + fixture + ": params must be an object");
    if (given.is_object()) {
      for (const auto& [key, value] : given.items()) {
        if (!values_.contains(key)) throw std::invalid_argument("fixture " + fixture + ": unknown parameter '" + key + "'");
        if (values_[key].is_string() != value.is_string() || (!value.is_string() && !value.is_number()))
          throw std::invalid_argument("fixture " + fixture + ": parameter '" + key + "' has the wrong type");
        values_[key] = value;
      }
    }
  }

  double num(const std::string& key) const { return values_.at(key).get<double>(); }
  Index count(const std::string& key) const {
    const double v = num(key);
    if (v < 1.0 || v != std::floor(v)) throw std::invalid_argument("parameter '" + key + "' must be a positive integer");
    return static_cast<Index>(v);
  }
  std::string str(const std::string& key) const { return values_.at(key).get<std::string>(); }
  const json& all() const { return values_; }

private:
  json values_;
};

void positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive");
}

std::vector<Convexity> all_convex(Index n) { return std::vector<Convexity>(static_cast<std::size_t>(n), Convexity::convex); }

/// ξ^i = h(W_T^{(i mod d)} + shift·i).
TerminalSampler coordinate_terminal(Index n, std::function<double(double)> h, double shift = 0.0) {
  return [n, h = std::move(h), shift](const PathEnsemble& paths) {
    const Eigen::MatrixXd& W = paths.position(paths.grid().steps());
    Eigen::MatrixXd xi(paths.particles(), n);
    for (Index i = 0; i < n; ++i) {
      const Index c = i % paths.dim();
      for (Index p = 0; p < paths.particles(); ++p) xi(p, i) = h(W(p, c) + shift * static_cast<double>(i));
    }
    return xi;
  };
}

Fixture pure_quadratic(const json& given) {
  Params P("pure_quadratic", given, {{"gamma", 1.0}, {"n", 1}, {"d", 0}, {"clip", 0.0}});
  const double gamma = P.num("gamma"), clip = P.num("clip");
  const Index n = P.count("n");
  const Index d = P.num("d") == 0.0 ? n : P.count("d");
  positive(gamma, "pure_quadratic: gamma");
  if (!(clip >= 0.0)) throw std::invalid_argument("pure_quadratic: clip must be nonnegative");

  Fixture f;
  f.name = "pure_quadratic";
  f.params = P.all();
  f.spec = {n, d,
            [gamma](Index i, double, const Eigen::VectorXd&, const Eigen::MatrixXd& z, const MeasureView&,
                    const Eigen::VectorXd&) { return 0.5 * gamma * z.row(i).squaredNorm(); },
            true, LawDependence::none};
  std::function<double(double)> h = [](double w) { return w; };
  if (clip > 0.0) h = [clip](double w) { return std::clamp(w, -clip, clip); };
  f.terminal = coordinate_terminal(n, h);
  f.scalar_terminal = h;
  f.terminal_bound = clip > 0.0 ? clip : std::numeric_limits<double>::infinity();
  f.convex = CertificateConvex{0.0, gamma, 0.0, all_convex(n)};
  if (clip > 0.0) {
    const Monomial psi{0.5 * gamma, 0.0, 1.0};
    f.local = CertificateLocal{gamma, 1e-3, 1e-3, 0.0, clip, 0.0, 0.0, psi, {}};
    f.global = CertificateGlobal{1e-3, gamma, clip, 0.0, 0.0, psi};
  }
  f.default_scheme = "theta";
  return f;
}

Fixture linear_mf(const json& given) {
  Params P("linear_mf", given, {{"a", 0.0}, {"b", 1.0}, {"terminal", "constant"}, {"c", 1.0}});
  const double a = P.num("a"), b = P.num("b"), c = P.num("c");
  const std::string kind = P.str("terminal");
  if (kind != "constant" && kind != "brownian")
    throw std::invalid_argument("linear_mf: terminal must be 'constant' or 'brownian'");
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) throw std::invalid_argument("linear_mf: non-finite parameter");

  Fixture f;
  f.name = "linear_mf";
  f.params = P.all();
  f.spec = {1, 1,
            [a, b](Index i, double, const Eigen::VectorXd& y, const Eigen::MatrixXd&, const MeasureView& law,
                   const Eigen::VectorXd&) { return a * y[i] + b * law.y_mean()[i]; },
            true, LawDependence::y_only};
  const double K = std::max(std::abs(a), std::abs(b));
  f.convex = CertificateConvex{K, 1.0, 0.0, all_convex(1)};
  if (kind == "constant") {
    f.scalar_terminal = [c](double) { return c; };
    f.terminal_bound = std::abs(c);
    const double L = std::max(K, 1e-3);
    f.global = CertificateGlobal{L, 1.0, std::abs(c), 0.0, 0.0, Monomial{K, 0.0, 1.0}};
    f.local = CertificateLocal{1.0, 1e-3, 1e-3, 0.0, std::abs(c), 0.0, 0.0, Monomial{K, std::abs(a), 1.0},
                               Monomial{0.0, std::abs(b), 1.0}};
  } else {
    f.scalar_terminal = [](double w) { return w; };
  }
  f.terminal = coordinate_terminal(1, f.scalar_terminal);
  f.default_scheme = "theta";
  return f;
}

Fixture remark31(const json& given) {
  Params P("remark31", given, {{"n", 2}, {"d", 1}, {"M1", 1.0}});
  const Index n = P.count("n"), d = P.count("d");
  const double M1 = P.num("M1");
  positive(M1, "remark31: M1");

  Fixture f;
  f.name = "remark31";
  f.params = P.all();
  f.spec = {n, d,
            [](Index i, double, const Eigen::VectorXd& y, const Eigen::MatrixXd& z, const MeasureView& law,
               const Eigen::VectorXd&) {
              const double zi = z.row(i).norm(), zn = z.norm();
              const double w1 = law.y_w(2.0), w2 = law.z_w(2.0);
              return (y.squaredNorm() + std::sin(zi)) * zn + std::pow(zn, 4.0 / 3.0) + zi * zi +
                     w1 * w1 * w1 * std::cos(w2) + std::pow(w2, 4.0 / 3.0);
            },
            true, LawDependence::joint};
  f.terminal = coordinate_terminal(n, [M1](double w) { return M1 * std::sin(w); }, 1.0);
  f.terminal_bound = M1;
  // Young's inequality on each product with exponents (2,2) for row i and
  // (4/3, 4) for rows j ≠ i; (x²+1)^4 ≤ 8(x^8+1) and (x²+1)^2 ≤ x^8 + 3.
  const double nn = static_cast<double>(n), cb = std::cbrt(nn);
  const double gamma = 2.0 * (1.5 + 2.0 / 3.0 * cb);
  const double lambda = 0.75 + cb;
  const Monomial psi{1.5 + 2.0 * (nn - 1.0) + cb / 3.0, 0.5 + 2.0 * (nn - 1.0), 8.0};
  f.local = CertificateLocal{gamma, lambda, 1.0, 1.0 / 3.0, M1, 0.0, 0.0, psi, Monomial{0.0, 1.0, 3.0}};
  f.default_scheme = "local";
  return f;
}

Fixture eq41(const json& given) {
  Params P("eq41", given, {{"n", 2}, {"d", 0}, {"M1", 1.0}, {"T", 1.0}});
  const Index n = P.count("n");
  const Index d = P.num("d") == 0.0 ? n : P.count("d");
  const double M1 = P.num("M1"), T = P.num("T");
  positive(M1, "eq41: M1");
  positive(T, "eq41: T");

  Fixture f;
  f.name = "eq41";
  f.params = P.all();
  f.spec = {n, d,
            [](Index i, double, const Eigen::VectorXd& y, const Eigen::MatrixXd& z, const MeasureView& law,
               const Eigen::VectorXd&) {
              double s = 0.0;
              for (Index j = 0; j < z.rows(); ++j)
                if (j != i) s += std::sin(z.row(j).norm());
              return 1.0 + y.norm() + z.row(i).squaredNorm() + s + law.y_w(2.0) * std::cos(law.z_w(2.0));
            },
            true, LawDependence::joint};
  f.terminal = coordinate_terminal(n, [M1](double w) { return M1 * std::sin(w); });
  f.terminal_bound = M1;
  const double nn = static_cast<double>(n);
  // |1 + Σ_{j≠i} sin| ≤ n, so ζ ≡ n and ∫ζ² = n²T.
  f.global = CertificateGlobal{1.0, 2.0, M1, nn * nn * T, nn, Monomial{1.0, 1.0, 1.0}};
  f.local = CertificateLocal{2.0, 1.0, 1e-3, 0.0, M1, 0.0, 0.0, Monomial{1.0, 1.0, 1.0}, Monomial{0.0, 1.0, 1.0}};
  f.default_scheme = "global";
  return f;
}

Fixture bounded_sine_mf(const json& given) {
  Params P("bounded_sine_mf", given, {{"n", 1}, {"d", 0}, {"gamma", 1.0}, {"a", 0.5}, {"b", 0.5}});
  const Index n = P.count("n");
  const Index d = P.num("d") == 0.0 ? n : P.count("d");
  const double gamma = P.num("gamma"), a = P.num("a"), b = P.num("b");
  positive(gamma, "bounded_sine_mf: gamma");
  if (!(a >= 0.0) || !(b >= 0.0)) throw std::invalid_argument("bounded_sine_mf: a and b must be nonnegative");

  Fixture f;
  f.name = "bounded_sine_mf";
  f.params = P.all();
  f.spec = {n, d,
            [gamma, a, b](Index i, double, const Eigen::VectorXd& y, const Eigen::MatrixXd& z, const MeasureView& law,
                          const Eigen::VectorXd&) {
              return 0.5 * gamma * z.row(i).squaredNorm() + a * std::sin(y[i]) + b * law.y_mean()[i];
            },
            true, LawDependence::y_only};
  f.terminal = coordinate_terminal(n, [](double w) { return std::sin(w); });
  f.scalar_terminal = [](double w) { return std::sin(w); };
  f.terminal_bound = 1.0;
  const double K = std::max(a, b);
  const double lip = std::max({a, b, 0.5 * gamma});
  f.convex = CertificateConvex{K, gamma, 0.0, all_convex(n)};
  f.global = CertificateGlobal{std::max(K, 1e-3), gamma, 1.0, 0.0, 0.0, Monomial{lip, 0.0, 1.0}};
  f.local = CertificateLocal{gamma, 1e-3, 1e-3, 0.0, 1.0, 0.0, 0.0, Monomial{lip, a, 1.0}, Monomial{0.0, b, 1.0}};
  f.default_scheme = "theta";
  return f;
}

Fixture volterra_demo(const json& given) {
  Params P("volterra_demo", given, {{"gamma", 1.0}, {"clamp", 10.0}, {"g", "mean"}, {"n", 1}, {"d", 0}});
  const double gamma = P.num("gamma"), clamp = P.num("clamp");
  const std::string mode = P.str("g");
  const Index n = P.count("n");
  const Index d = P.num("d") == 0.0 ? n : P.count("d");
  positive(gamma, "volterra_demo: gamma");
  positive(clamp, "volterra_demo: clamp");
  if (mode != "mean" && mode != "zero" && mode != "one")
    throw std::invalid_argument("volterra_demo: g must be 'mean', 'zero' or 'one'");

  Fixture f;
  f.name = "volterra_demo";
  f.params = P.all();
  f.spec = {n, d,
            [gamma](Index i, double, const Eigen::VectorXd&, const Eigen::MatrixXd& z, const MeasureView&,
                    const Eigen::VectorXd&) { return 0.5 * gamma * z.row(i).squaredNorm(); },
            true, LawDependence::none};
  f.terminal = coordinate_terminal(n, [](double w) { return w; });
  f.scalar_terminal = [](double w) { return w; };
  f.convex = CertificateConvex{0.0, gamma, 0.0, all_convex(n)};

  PathFunctional g;
  g.n = n;
  double C = 0.0;
  if (mode == "mean") {
    C = std::max(clamp, 1.0);
    g.evaluate = [clamp](Index j, const Solution& sol) {
      const Eigen::MatrixXd& Y = sol.Y[static_cast<std::size_t>(j)];
      Eigen::MatrixXd out(Y.rows(), Y.cols());
      for (Index i = 0; i < Y.cols(); ++i) out.col(i).setConstant(std::clamp(Y.col(i).mean(), -clamp, clamp));
      return out;
    };
  } else {
    const double level = mode == "one" ? 1.0 : 0.0;
    C = level;
    g.evaluate = [level](Index j, const Solution& sol) {
      const Eigen::MatrixXd& Y = sol.Y[static_cast<std::size_t>(j)];
      return Eigen::MatrixXd::Constant(Y.rows(), Y.cols(), level).eval();
    };
  }
  f.g = g;
  f.volterra = CertificateVolterra{C, true, gamma};
  f.default_scheme = "volterra";
  return f;
}

const std::map<std::string, Fixture (*)(const json&)>& registry() {
  static const std::map<std::string, Fixture (*)(const json&)> r{
      {"pure_quadratic", pure_quadratic}, {"linear_mf", linear_mf},         {"remark31", remark31},
      {"eq41", eq41},                     {"bounded_sine_mf", bounded_sine_mf}, {"volterra_demo", volterra_demo}};
  return r;
}

}  // namespace

std::vector<std::string> fixture_names() {
  std::vector<std::string> out;
  for (const auto& [name, _] : registry()) out.push_back(name);
  return out;
}

Fixture fixture(const std::string& name, const nlohmann::json& params) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw std::invalid_argument("unknown fixture '" + name + "'");
  Fixture f = it->second(params);
  if (f.local) f.local->validate();
  if (f.global) f.global->validate();
  if (f.convex) f.convex->validate(f.spec.n);
  if (f.volterra) f.volterra->validate();
  return f;
}

}  // namespace mfbsde
