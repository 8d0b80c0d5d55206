#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "ordfa/normal.hpp"

using namespace ordfa;

TEST_CASE("normal pdf and cdf against quadrature") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(normal_cdf(-std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804).epsilon(1e-10));
  CHECK(normal_pdf(1.7) == normal_pdf(-1.7));

  // Derivative of the quadrature CDF at 2.
  const double h = 1e-3;
  const double slope = (oracle::cdf(2 + h) - oracle::cdf(2 - h)) / (2 * h);
  CHECK(normal_pdf(2.0) == doctest::Approx(slope).epsilon(1e-6));
  CHECK(normal_pdf(2.0) == doctest::Approx(0.05399096651).epsilon(1e-10));

  CHECK(std::abs(normal_cdf(1.0) - oracle::cdf(1.0)) <= 1e-12);
  CHECK(normal_cdf(1.0) == doctest::Approx(0.841344746).epsilon(1e-9));
  for (double x = -8; x <= 8; x += 0.37) CHECK(std::abs(normal_cdf(x) - oracle::cdf(x)) <= 1e-12);
}

TEST_CASE("NaN inputs are rejected") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(normal_cdf(nan), std::domain_error);
  CHECK_THROWS_AS(normal_pdf(nan), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(nan), std::domain_error);
  CHECK_THROWS_AS(normal_quantile(1.5), std::domain_error);
}

TEST_CASE("quantile inverts the cdf") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(std::isinf(normal_quantile(0.0)));
  CHECK(normal_quantile(0.0) < 0);
  CHECK(std::isinf(normal_quantile(1.0)));
  for (double p : {1e-10, 1e-4, 0.01, 0.2, 0.25, 0.6, 0.75, 0.97, 1 - 1e-6})
    CHECK(normal_quantile(p) == doctest::Approx(oracle::quantile(p)).epsilon(1e-9));
  CHECK(normal_quantile(0.75) == doctest::Approx(0.6744897502).epsilon(1e-9));
}

TEST_CASE("Mills ratio matches the direct form and the asymptotic series") {
  for (double a : {0.0, 0.5, 2.0, 4.9}) {
    const double direct = (1 - oracle::cdf(a)) / oracle::pdf(a);
    CHECK(mills_ratio(a) == doctest::Approx(direct).epsilon(1e-10));
  }
  // Continuity across the switch point.
  CHECK(mills_ratio(5.0) == doctest::Approx(0.5 * std::erfc(5 / std::sqrt(2.0)) / oracle::pdf(5))
                                .epsilon(1e-12));
  for (double a : {10.0, 30.0, 1e3}) {
    const double a2 = a * a;
    const double series = (1 - 1 / a2 + 3 / (a2 * a2) - 15 / (a2 * a2 * a2)) / a;
    CHECK(mills_ratio(a) == doctest::Approx(series).epsilon(1e-6));
  }
  CHECK(mills_ratio(std::numeric_limits<double>::infinity()) == 0.0);
  CHECK_THROWS(mills_ratio(-1.0));
}

TEST_CASE("normal interval mass and hazards") {
  const double inf = std::numeric_limits<double>::infinity();
  struct Case {
    double lo, hi;
  };
  for (const auto& c : {Case{-0.64, 0.64}, Case{-inf, 0}, Case{0.3, 2.0}, Case{-2.5, -1.0},
                        Case{-1.0, inf}, Case{1.0, 7.0}, Case{-7.0, -6.0}}) {
    const auto t = normal_interval(c.lo, c.hi);
    const double p = oracle::cdf(c.hi) - oracle::cdf(c.lo);
    CHECK(std::exp(t.log_prob) == doctest::Approx(p).epsilon(1e-9));
    const double pl = std::isinf(c.lo) ? 0 : oracle::pdf(c.lo);
    const double pu = std::isinf(c.hi) ? 0 : oracle::pdf(c.hi);
    CHECK(t.hazard_lower == doctest::Approx(pl / p).epsilon(1e-8));
    CHECK(t.hazard_upper == doctest::Approx(pu / p).epsilon(1e-8));
  }
}

TEST_CASE("far tails stay finite and match asymptotics") {
  const double inf = std::numeric_limits<double>::infinity();
  // log Q(a) ~ -a^2/2 - log(a sqrt(2 pi)) for large a.
  for (double a : {40.0, 200.0}) {
    const auto t = normal_interval(a, inf);
    const double approx = -0.5 * a * a - std::log(a * std::sqrt(2 * M_PI));
    CHECK(std::isfinite(t.log_prob));
    CHECK(t.log_prob == doctest::Approx(approx).epsilon(1e-3));
    // hazard at the lower end ~ a for a one-sided tail.
    CHECK(t.hazard_lower == doctest::Approx(a).epsilon(1e-3));
    const auto m = normal_interval(-inf, -a);
    CHECK(m.log_prob == doctest::Approx(t.log_prob));
    CHECK(m.hazard_upper == doctest::Approx(t.hazard_lower));
  }
  // Narrow interval far in the tail.
  const auto t = normal_interval(30.0, 30.5);
  CHECK(std::isfinite(t.log_prob));
  CHECK(std::isfinite(t.hazard_lower));
  CHECK(t.hazard_upper < t.hazard_lower);
}

TEST_CASE("templated on the scalar type") {
  CHECK(normal_cdf(0.0f) == 0.5f);
  CHECK(normal_cdf(1.0L) == doctest::Approx(0.841344746));
  const auto t = normal_interval(-1.0f, 1.0f);
  CHECK(std::exp(t.log_prob) == doctest::Approx(0.6826895).epsilon(1e-5));
}
