#include <doctest.h>

#include <cmath>
#include <random>

#include "unimom/error.hpp"
#include "unimom/metrics/metrics.hpp"

using namespace unimom;
using namespace unimom::metrics;

TEST_CASE("sortino example") {
  const std::vector<double> r{0.02, -0.01, 0.03, -0.02};
  const auto s = summarize(r, "x");
  CHECK(s.label == "x");
  const double daily = s.sortino / std::sqrt(252.0);
  CHECK(std::abs(daily - 0.4472) < 5e-5);
  CHECK(daily == doctest::Approx(0.005 / std::sqrt(0.0005 / 4.0)).epsilon(1e-12));
  CHECK(s.ann_return_pct == doctest::Approx(100 * 0.005 * 252).epsilon(1e-12));
}

TEST_CASE("max drawdown example") {
  const std::vector<double> r{0.1, 0.99 / 1.1 - 1.0, 1.2 / 0.99 - 1.0};
  CHECK(max_drawdown(r) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(std::abs(summarize(r).max_drawdown_pct - -10.0) < 5e-5);
  const std::vector<double> up{0.01, 0.0, 0.02};
  CHECK(max_drawdown(up) == 0.0);
  CHECK(summarize(up).max_drawdown_pct == 0.0);
}

TEST_CASE("sharpe is the ratio of annualised return and vol") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> r(500);
  for (double& x : r) x = 0.0004 + 0.01 * z(rng);
  const auto s = summarize(r);
  CHECK(s.sharpe == doctest::Approx(s.ann_return_pct / s.ann_vol_pct).epsilon(1e-12));
  CHECK(s.max_drawdown_pct <= 0.0);
}

TEST_CASE("scaling returns scales return and vol only") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::vector<double> r(300);
  for (double& x : r) x = 0.0003 + 0.008 * z(rng);
  const auto base = summarize(r);
  for (double c : {0.25, 2.0, 7.5}) {
    std::vector<double> scaled = r;
    for (double& x : scaled) x *= c;
    const auto s = summarize(scaled);
    CHECK(s.ann_return_pct == doctest::Approx(c * base.ann_return_pct).epsilon(1e-10));
    CHECK(s.ann_vol_pct == doctest::Approx(c * base.ann_vol_pct).epsilon(1e-10));
    CHECK(s.sharpe == doctest::Approx(base.sharpe).epsilon(1e-10));
    CHECK(s.sortino == doctest::Approx(base.sortino).epsilon(1e-10));
  }
}

TEST_CASE("degenerate inputs") {
  CHECK_THROWS_AS(summarize(std::vector<double>{0.01}), Error);
  CHECK_THROWS_AS(summarize(std::vector<double>{}), Error);
  const auto flat = summarize(std::vector<double>{0.0, 0.0, 0.0});
  CHECK(flat.sharpe == 0.0);
  CHECK(flat.sortino == 0.0);
  const auto gain = summarize(std::vector<double>{0.01, 0.01});
  CHECK(gain.sharpe == INFINITY);
  CHECK(gain.sortino == INFINITY);
}

TEST_CASE("cumulative returns compound") {
  const std::vector<double> r{0.1, -0.5, 0.2};
  const auto c = cumulative_returns(r);
  REQUIRE(c.size() == 3);
  CHECK(c[0] == doctest::Approx(0.1));
  CHECK(c[1] == doctest::Approx(-0.45));
  CHECK(c[2] == doctest::Approx(1.1 * 0.5 * 1.2 - 1.0).epsilon(1e-14));
}
