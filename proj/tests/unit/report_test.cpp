#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "test_util.hpp"
#include "unimom/error.hpp"
#include "unimom/report/report.hpp"

using namespace unimom;
using namespace unimom::report;
namespace fs = std::filesystem;

namespace {

backtest::BacktestReport fake_report(std::uint64_t seed, std::size_t days = 120) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.01, 1.0);
  backtest::BacktestReport r;
  r.loss_name = "softcap";
  r.calendar = data::business_days(data::parse_date("2004-01-01"), days);
  for (const auto& slug : backtest::strategy_slugs()) {
    portfolio::StrategyReturns s;
    s.label = backtest::strategy_label(slug);
    s.calendar = r.calendar;
    for (std::size_t t = 0; t < days; ++t) {
      const double g = 0.0003 + 0.01 * z(rng);
      const double turn = u(rng);
      s.gross.push_back(g);
      s.turnover.push_back(turn);
      s.net.push_back(g - 3e-4 * turn);
      s.valid.push_back(1);
    }
    r.strategies.push_back({s.label, slug, s, {}});
  }
  r.allocations.calendar = r.calendar;
  for (std::size_t t = 0; t < days; ++t) {
    std::array<double, 3> w{u(rng), u(rng), u(rng)};
    const double sum = w[0] + w[1] + w[2];
    for (double& x : w) x /= sum;
    r.allocations.weights.push_back(w);
  }
  backtest::FoldSummary f;
  f.fold.test_year = 2004;
  f.chosen = model::MmoeConfig{};
  f.validation_loss = 1.25;
  f.epochs = 9;
  f.best_epoch = 4;
  r.folds.push_back(f);
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

std::vector<double> fields(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  std::getline(ss, cell, ',');
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

}  // namespace

TEST_CASE("summary has one row per strategy") {
  testing::TempDir dir;
  emit_report(fake_report(1), dir.path());
  const auto rows = lines(testing::read_file(dir / "summary.csv"));
  REQUIRE(rows.size() == 15);
  CHECK(rows[0] == "strategy,ann_return_pct,ann_vol_pct,sharpe,sortino,max_dd_pct");
  CHECK(rows[1].rfind("TSMOM(1),", 0) == 0);
  CHECK(rows[12].rfind("UnifiedMom(CAN),", 0) == 0);
  const auto s = summarize(fake_report(1));
  CHECK(rows[5] == "TSMOM(1,4)," + [&] {
          char buf[200];
          std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.2f,%.2f", s[4].ann_return_pct,
                        s[4].ann_vol_pct, s[4].sharpe, s[4].sortino, s[4].max_drawdown_pct);
          return std::string(buf);
        }());
  for (const auto& slug : backtest::strategy_slugs()) {
    CHECK(fs::exists(dir / ("cumret_" + slug + ".csv")));
    CHECK(fs::exists(dir / ("returns_" + slug + ".csv")));
  }
  const auto folds = lines(testing::read_file(dir / "folds.csv"));
  REQUIRE(folds.size() == 2);
  CHECK(folds[1] == "2004,1,64,3,2,64,1.25,9,4");
}

TEST_CASE("allocations rows are on the simplex") {
  testing::TempDir dir;
  emit_report(fake_report(2), dir.path());
  const auto rows = lines(testing::read_file(dir / "allocations.csv"));
  CHECK(rows[0] == "date,w_fast,w_med,w_slow");
  REQUIRE(rows.size() == 121);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto w = fields(rows[k]);
    CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) < 1e-9);
  }
  CHECK(rows[1].substr(0, 10) == "2004-01-01");
}

TEST_CASE("cumulative file ends at the compounded return") {
  testing::TempDir dir;
  const auto r = fake_report(3);
  emit_report(r, dir.path());
  const auto rows = lines(testing::read_file(dir / "cumret_can.csv"));
  CHECK(rows[0] == "date,cumret_pct");
  double eq = 1.0;
  for (double x : r.strategy("can").returns.net) eq *= 1.0 + x;
  CHECK(std::abs(fields(rows.back())[0] / 100.0 - (eq - 1.0)) < 1e-10);
}

TEST_CASE("re-emission is byte-identical and reloads exactly") {
  testing::TempDir a, b;
  const auto r = fake_report(4);
  emit_report(r, a.path());
  emit_report(r, b.path());
  for (const auto& e : fs::directory_iterator(a.path())) {
    const auto name = e.path().filename().string();
    CHECK(testing::read_file(e.path()) == testing::read_file(b / name));
  }
  const auto run = load_run(a.path());
  REQUIRE(run.slugs == backtest::strategy_slugs());
  for (std::size_t k = 0; k < run.slugs.size(); ++k) {
    CHECK(run.returns[k].net == r.strategies[k].returns.net);
    CHECK(run.returns[k].gross == r.strategies[k].returns.gross);
    CHECK(run.returns[k].turnover == r.strategies[k].returns.turnover);
    CHECK(run.returns[k].calendar == r.calendar);
    CHECK(run.returns[k].label == r.strategies[k].label);
  }
  // Regeneration from returns files reproduces the summary and curves.
  const auto summary = testing::read_file(a / "summary.csv");
  const auto curve = testing::read_file(a / "cumret_mvo.csv");
  fs::remove(a / "summary.csv");
  fs::remove(a / "cumret_mvo.csv");
  regenerate(a.path());
  CHECK(testing::read_file(a / "summary.csv") == summary);
  CHECK(testing::read_file(a / "cumret_mvo.csv") == curve);
}

TEST_CASE("ablation table needs both runs") {
  testing::TempDir dir;
  emit_report(fake_report(5), dir / "softcap");
  CHECK_FALSE(emit_ablation(dir.path()));
  emit_report(fake_report(6), dir / "sharpe");
  CHECK(emit_ablation(dir.path()));
  const auto rows = lines(testing::read_file(dir / "ablation.csv"));
  REQUIRE(rows.size() == 13);
  CHECK(rows[0] == "loss,strategy,ann_return_pct,ann_vol_pct,sharpe,sortino,max_dd_pct");
  CHECK(rows[1].rfind("softcap,UnifiedMom(Fast),", 0) == 0);
  CHECK(rows[4].rfind("softcap,UnifiedMom(CAN),", 0) == 0);
  CHECK(rows[7].rfind("sharpe,UnifiedMom(Fast),", 0) == 0);
  CHECK(rows[12].rfind("sharpe,UnifiedMom(MVO),", 0) == 0);
  fs::remove(dir / "ablation.csv");
  regenerate(dir.path());
  CHECK(lines(testing::read_file(dir / "ablation.csv")) == rows);
}

TEST_CASE("report errors") {
  testing::TempDir dir;
  testing::write_file(dir / "file", "x");
  CHECK_THROWS_AS(emit_report(fake_report(7), dir / "file" / "sub"), DataError);
  CHECK_THROWS_AS(load_run(dir.path()), DataError);
  CHECK_THROWS_AS(regenerate(dir.path()), DataError);
  testing::write_file(dir / "returns_can.csv", "date,gross,net,turnover\n2004-01-01,0.1,abc,0\n");
  CHECK_THROWS_WITH_AS(load_run(dir.path()), doctest::Contains(":2"), DataError);
}
