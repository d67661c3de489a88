#include <cmath>
#include <random>

#include "doctest.h"
#include "test_util.hpp"
#include "unimom/error.hpp"
#include "unimom/targets/targets.hpp"

using namespace unimom;
using namespace unimom::targets;
using unimom::testing::panel_from_prices;

namespace {

std::vector<double> random_path(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 0.01);
  std::vector<double> p{100.0};
  while (p.size() < n) p.push_back(p.back() * std::exp(z(rng)));
  return p;
}

}  // namespace

TEST_CASE("forward_tsmom examples") {
  SUBCASE("constant future prices") {
    const TargetSlice s = forward_tsmom(panel_from_prices({std::vector<double>(30, 5.0)}), 20);
    CHECK(s.valid(0, 0));
    CHECK(s.values(0, 0) == 0.0);
  }
  SUBCASE("all future daily log returns +0.01 clip to +10") {
    std::vector<double> p{100.0};
    for (int k = 0; k < 20; ++k) p.push_back(p.back() * std::exp(0.01));
    const TargetSlice s = forward_tsmom(panel_from_prices({p}), 20);
    CHECK(s.values(0, 0) == kTargetClip);
  }
  SUBCASE("sign-flipped future path negates the target") {
    const auto p = random_path(3, 61);
    std::vector<double> q{p[0]};
    for (std::size_t k = 1; k < p.size(); ++k) q.push_back(q.back() * p[k - 1] / p[k]);
    const TargetSlice a = forward_tsmom(panel_from_prices({p}), 60);
    const TargetSlice b = forward_tsmom(panel_from_prices({q}), 60);
    CHECK(a.values(0, 0) == doctest::Approx(-b.values(0, 0)).epsilon(1e-12));
  }
  SUBCASE("unsupported horizons throw") {
    const auto p = panel_from_prices({random_path(1, 200)});
    CHECK_THROWS_AS(forward_tsmom(p, 21), DataError);
    CHECK_THROWS_AS(forward_tsmom(p, 0), DataError);
    CHECK_NOTHROW(forward_tsmom(p, 120));
  }
}

TEST_CASE("targets are masked without a full future window") {
  const auto p = panel_from_prices({random_path(2, 150)});
  const TargetSlice s = forward_tsmom(p, 120);
  CHECK(s.valid(29, 0));
  CHECK_FALSE(s.valid(30, 0));
  CHECK_FALSE(s.valid(149, 0));
}

TEST_CASE("stored targets match recomputation from raw prices") {
  const auto path = random_path(7, 200);
  const TargetPanel all = all_targets(panel_from_prices({path}));
  for (std::size_t k = 0; k < kHorizons.size(); ++k) {
    const std::size_t s = kHorizons[k];
    for (std::size_t t = 0; t + s < path.size(); ++t) {
      REQUIRE(all.slices[k].valid(t, 0));
      std::vector<double> r;
      for (std::size_t j = t + 1; j <= t + s; ++j) r.push_back(std::log(path[j] / path[j - 1]));
      double mean = 0.0;
      for (double x : r) mean += x / static_cast<double>(s);
      double var = 0.0;
      for (double x : r) var += (x - mean) * (x - mean) / static_cast<double>(s);
      const double expect = std::clamp(std::log(path[t + s] / path[t]) / std::sqrt(var), -10.0, 10.0);
      CHECK(std::abs(all.slices[k].values(t, 0) - expect) < 1e-12);
    }
  }
}

TEST_CASE("target at t moves iff prices in (t, t+s] move") {
  const auto path = random_path(11, 120);
  const std::size_t t = 40;
  const std::size_t s = 20;
  const TargetSlice base = forward_tsmom(panel_from_prices({path}), s);
  for (std::size_t j = 0; j < path.size(); ++j) {
    auto bumped = path;
    bumped[j] *= 1.05;
    const TargetSlice b = forward_tsmom(panel_from_prices({bumped}), s);
    const bool in_window = j > t && j <= t + s;
    // Bumping P_t itself also changes the forward return; only (t, t+s] and t are inputs.
    if (j == t) continue;
    CHECK((b.values(t, 0) != base.values(t, 0)) == in_window);
  }
}

TEST_CASE("save_targets writes valid cells") {
  unimom::testing::TempDir dir;
  const auto p = panel_from_prices({random_path(1, 25)});
  save_targets(forward_tsmom(p, 20), p, dir / "t.csv");
  const std::string text = unimom::testing::read_file(dir / "t.csv");
  CHECK(text.rfind("date,asset,target\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 5);
}
