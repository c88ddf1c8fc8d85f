#include "mfbsde/measures.hpp"

#include <doctest.h>

#include <random>

using namespace mfbsde;
using Eigen::Index;

TEST_CASE("distance to the point mass is the moment root") {
  Eigen::MatrixXd x(2, 1);
  x << 3.0, -1.0;
  CHECK(wasserstein_to_delta(x, 1.0) == doctest::Approx(2.0));
  CHECK(wasserstein_to_delta(x, 2.0) == doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(wasserstein_to_delta(x, 3.0), std::invalid_argument);
}

TEST_CASE("index coupling is an upper bound on the empirical distance") {
  Eigen::MatrixXd a(2, 1), b(2, 1);
  a << 0.0, 1.0;
  b << 1.0, 0.0;
  CHECK(paired_distance(a, b, 1.0) == doctest::Approx(1.0));
  CHECK(exact_wasserstein_small(ParticleCloud(a), ParticleCloud(b), 1.0) == doctest::Approx(0.0));

  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd c(5, 2), d(5, 2);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 2; ++j) c(i, j) = nd(gen), d(i, j) = nd(gen);
  for (double p : {1.0, 2.0})
    CHECK(exact_wasserstein_small(ParticleCloud(c), ParticleCloud(d), p) <= paired_distance(c, d, p) + 1e-15);
}

TEST_CASE("exponential moment of a standard normal") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> nd;
  Eigen::VectorXd w(100000);
  for (Index i = 0; i < w.size(); ++i) w[i] = nd(gen);
  const ExpMoment m = exp_moment(w, 1.0);
  CHECK(std::abs(m.value / std::exp(0.5) - 1.0) <= 0.05);
  CHECK(m.log_value == doctest::Approx(std::log(m.value)));
}

TEST_CASE("exponential moment stays finite in log form") {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(4, 800.0);
  const ExpMoment m = exp_moment(s, 1.0);
  CHECK(std::isinf(m.value));
  CHECK(m.log_value == doctest::Approx(800.0));
}

TEST_CASE("clouds reject empty and non-finite input") {
  CHECK_THROWS_AS(ParticleCloud(Eigen::MatrixXd(0, 1)), std::invalid_argument);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 1);
  bad(1, 0) = std::nan("");
  CHECK_THROWS_AS(ParticleCloud{bad}, std::invalid_argument);
}

TEST_CASE("measure view caches marginal statistics") {
  Eigen::MatrixXd y(2, 2), z(2, 1);
  y << 1.0, -2.0, 3.0, 2.0;
  z << 0.0, 2.0;
  const MeasureView v{ParticleCloud(y), ParticleCloud(z)};
  CHECK(v.y_mean()[0] == doctest::Approx(2.0));
  CHECK(v.y_mean()[1] == doctest::Approx(0.0));
  CHECK(v.y_abs_mean()[1] == doctest::Approx(2.0));
  CHECK(v.z_w(1.0) == doctest::Approx(1.0));
  CHECK(v.z_w(2.0) == doctest::Approx(std::sqrt(2.0)));
}
