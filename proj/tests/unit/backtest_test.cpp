#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "unimom/backtest/backtest.hpp"
#include "unimom/error.hpp"

using namespace unimom;
using namespace unimom::backtest;

namespace {

model::MmoeConfig toy_config(std::uint64_t seed = 1) {
  model::MmoeConfig c;
  c.n_experts = 2;
  c.lstm_layers = 1;
  c.lstm_hidden = 8;
  c.task_layers = 2;
  c.task_hidden = 8;
  c.sequence_length = 10;
  c.seed = seed;
  return c;
}

data::PricePanel trend_panel(std::uint64_t seed, std::size_t assets, std::size_t years) {
  return data::synthesize_panel(seed, assets, years, data::planted_trend_regimes(seed, assets, years));
}

// Tiny end-to-end configuration: one fold, toy model, a couple of epochs.
BacktestConfig toy_backtest() {
  BacktestConfig c;
  c.first_train_years = 4;
  c.grid.lstm_layers = {1};
  c.grid.lstm_hidden = {8};
  c.grid.n_experts = {2};
  c.grid.task_layers = {2};
  c.grid.task_hidden = {4, 8};
  c.grid_budget = 2;
  c.sequence_length = 10;
  c.train.max_epochs = 2;
  c.train.patience = 1;
  c.train.batch_window = 63;
  c.train.max_batches_per_epoch = 3;
  c.validation = model::Validation::kRelaxed;
  return c;
}

const data::PricePanel& toy_panel() {
  static const data::PricePanel p = trend_panel(3, 4, 5);
  return p;
}

const BacktestReport& toy_report() {
  static const BacktestReport r = run_backtest(toy_panel(), toy_backtest());
  return r;
}

}  // namespace

TEST_CASE("folds over 1990-2023") {
  const auto cal = data::business_days_between(1990, 2023);
  const auto folds = make_folds(cal);
  REQUIRE(folds.size() == 24);
  CHECK(folds.front().test_year == 2000);
  CHECK(folds.back().test_year == 2023);
  for (std::size_t j = 0; j < folds.size(); ++j) {
    const Fold& f = folds[j];
    CHECK(f.train_begin == 0);
    CHECK(data::year_of(cal[f.test_begin]) == f.test_year);
    CHECK(data::year_of(cal[f.test_end - 1]) == f.test_year);
    CHECK(data::year_of(cal[f.test_begin - 1]) == f.test_year - 1);
    CHECK(f.test_begin - f.val_begin ==
          static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(f.test_begin))));
    CHECK(f.val_begin > f.train_begin);
    if (j > 0) {
      CHECK(f.test_begin == folds[j - 1].test_end);
      CHECK(f.test_begin > folds[j - 1].test_begin);
    }
  }
  CHECK(folds.back().test_end == cal.size());
  CHECK(data::year_of(cal[folds.front().val_begin]) == 1998);
}

TEST_CASE("fold count formula") {
  CHECK(make_folds(data::business_days_between(1990, 2000)).size() == 1);
  for (int last : {2001, 2005, 2012}) {
    for (int first_train : {3, 5, 10}) {
      const auto f = make_folds(data::business_days_between(1990, last), first_train);
      CHECK(f.size() == static_cast<std::size_t>(last - (1990 + first_train) + 1));
    }
  }
  CHECK_THROWS_AS(make_folds(data::business_days_between(1990, 1999)), Error);
  CHECK_THROWS_AS(make_folds({}), Error);
  CHECK_THROWS_AS(make_folds(data::business_days_between(1990, 2000), 10, 0.0), Error);
}

TEST_CASE("grid enumeration and sampling") {
  GridSpec g;
  CHECK(g.size() == 576);
  const auto all = g.enumerate(model::MmoeConfig{});
  REQUIRE(all.size() == 576);
  CHECK(all.front().lstm_layers == 1);
  CHECK(all.front().task_hidden == 64);
  CHECK(all[1].task_hidden == 126);
  CHECK(all.back().lstm_layers == 3);
  CHECK(all.back().task_hidden == 512);

  const auto a = sample_grid(all, 24, 7);
  const auto b = sample_grid(all, 24, 7);
  CHECK(a == b);
  CHECK(a.size() == 24);
  CHECK_FALSE(a == sample_grid(all, 24, 8));
  std::set<std::string> seen;
  for (const auto& c : a) seen.insert(model::describe(c));
  CHECK(seen.size() == 24);
  CHECK(sample_grid(all, 1, 3).size() == 1);
  CHECK(sample_grid(all, 1000, 3) == all);
  CHECK_THROWS_AS(sample_grid(all, 0, 3), Error);
  CHECK_THROWS_AS(sample_grid({}, 4, 3), Error);
}

TEST_CASE("grid search selection rules") {
  std::vector<model::MmoeConfig> c(4, toy_config());
  c[1].task_hidden = 16;  // bigger
  c[2].task_hidden = 4;   // smaller
  c[3].task_hidden = 4;
  SUBCASE("minimum loss wins") {
    const auto r = grid_search(c, [](std::size_t i, const auto&) { return i == 1 ? 0.5 : 1.0; });
    CHECK(r.best == 1);
  }
  SUBCASE("ties go to the smaller model, then the earlier one") {
    const auto r = grid_search(c, [](std::size_t, const auto&) { return 0.5; });
    CHECK(r.best == 2);
    CHECK(r.candidates[2].parameter_count < r.candidates[0].parameter_count);
  }
  SUBCASE("NaN never wins") {
    const auto r = grid_search(c, [](std::size_t i, const auto&) { return i == 0 ? NAN : 2.0 - i; });
    CHECK(r.best == 3);
    CHECK_THROWS_AS(grid_search(c, [](std::size_t, const auto&) { return NAN; }), Error);
  }
  SUBCASE("parallel workers agree with serial") {
    auto f = [](std::size_t i, const auto&) { return std::sin(static_cast<double>(i)); };
    CHECK(grid_search(c, f, 3).best == grid_search(c, f, 1).best);
  }
  SUBCASE("trainer errors propagate") {
    CHECK_THROWS_WITH(grid_search(c,
                                  [](std::size_t i, const auto&) -> double {
                                    if (i == 2) throw Error("boom");
                                    return 1.0;
                                  },
                                  2),
                      "boom");
  }
  CHECK_THROWS_AS(grid_search({}, [](std::size_t, const auto&) { return 0.0; }), Error);
}

TEST_CASE("early stopping") {
  SUBCASE("rising validation loss stops after patience + 1 epochs") {
    EarlyStopper s(5, 20);
    std::size_t epochs = 0;
    for (double v = 1.0;; v += 0.1) {
      ++epochs;
      if (!s.record(v)) break;
    }
    CHECK(epochs == 6);
    CHECK(s.best_epoch() == 1);
    CHECK(s.best_loss() == 1.0);
  }
  SUBCASE("always improving runs every epoch") {
    EarlyStopper s(5, 20);
    std::size_t epochs = 0;
    for (double v = 1.0;; v -= 0.01) {
      ++epochs;
      CHECK(epochs <= 20);
      if (!s.record(v)) break;
      CHECK(s.improved());
    }
    CHECK(epochs == 20);
    CHECK(s.best_epoch() == 20);
  }
  SUBCASE("patience counts non-improving epochs since the best") {
    EarlyStopper s(2, 20);
    CHECK(s.record(1.0));
    CHECK(s.record(1.0));  // equal is not an improvement
    CHECK(s.record(0.5));
    CHECK(s.best_epoch() == 3);
    CHECK(s.record(0.7));
    CHECK_FALSE(s.record(0.6));
  }
  CHECK_THROWS_AS(EarlyStopper(5, 5), Error);
  CHECK_THROWS_AS(EarlyStopper(0, 5), Error);
}

TEST_CASE("datasets respect their end date") {
  const auto panel = trend_panel(4, 3, 2);
  const auto market = prepare_market(panel);
  const std::size_t end = 420;
  const auto full = make_dataset(market, 262, end, 10, 30);
  const auto cut = make_dataset(prepare_market(panel.truncated(end)), 262, end, 10, 30);
  REQUIRE(full.size() > 0);
  REQUIRE(full.size() == cut.size());
  for (std::size_t b = 0; b < full.size(); ++b) {
    CHECK(full.batches[b].dates == cut.batches[b].dates);
    CHECK(full.batches[b].sequences == cut.batches[b].sequences);
    for (std::size_t k = 0; k < 3; ++k) CHECK(full.inputs[b].targets[k] == cut.inputs[b].targets[k]);
    CHECK(full.inputs[b].next_returns == cut.inputs[b].next_returns);
    for (const auto& row : full.batches[b].rows) CHECK(row.date + 120 < end);
  }
  CHECK(make_dataset(market, 300, 300, 10, 30).size() == 0);
  CHECK_THROWS_AS(make_dataset(market, 0, 10, 10, 1), Error);
}

TEST_CASE("adam steps reduce the loss on a fixed batch") {
  const auto panel = trend_panel(5, 4, 2);
  const auto data = make_dataset(prepare_market(panel), 262, 504, 10, 30);
  REQUIRE(data.size() > 0);
  auto m = model::init_model(toy_config(), model::Validation::kRelaxed);
  diff::AdamConfig cfg;
  cfg.learning_rate = 3e-3;
  diff::Adam adam(cfg);
  std::vector<double> losses;
  for (int s = 0; s < 50; ++s) losses.push_back(train_step(m, adam, data.batches[0], data.inputs[0], {}));
  std::size_t rises = 0;
  for (std::size_t s = 1; s < losses.size(); ++s) rises += losses[s] > losses[s - 1] ? 1 : 0;
  CHECK(rises <= 10);
  CHECK(losses.back() < losses.front());
}

TEST_CASE("train_model returns the best validation snapshot") {
  const auto panel = trend_panel(6, 4, 3);
  const auto market = prepare_market(panel);
  const auto train = make_dataset(market, 262, 500, 10, 40);
  const auto val = make_dataset(market, 500, 700, 10, 40);
  TrainSpec spec;
  spec.max_epochs = 6;
  spec.patience = 2;
  spec.seed = 3;
  const auto r = train_model(toy_config(), train, val, spec, model::Validation::kRelaxed);
  const auto& h = r.history;
  REQUIRE(!h.validation_loss.empty());
  CHECK(h.train_loss.size() == h.validation_loss.size());
  const double best = *std::min_element(h.validation_loss.begin(), h.validation_loss.end());
  CHECK(h.best_validation_loss == best);
  CHECK(h.validation_loss[h.best_epoch - 1] == best);
  CHECK(evaluate(r.model, val, spec.loss) == best);
  const auto again = train_model(toy_config(), train, val, spec, model::Validation::kRelaxed);
  CHECK(again.model == r.model);
  CHECK_THROWS_AS(train_model(toy_config(), Dataset{}, val, spec, model::Validation::kRelaxed), Error);
}

TEST_CASE("grid search prefers a trained model over a frozen one") {
  const auto panel = trend_panel(6, 4, 3);
  const auto market = prepare_market(panel);
  const auto train = make_dataset(market, 262, 500, 10, 40);
  const auto val = make_dataset(market, 500, 700, 10, 40);
  TrainSpec spec;
  spec.max_epochs = 4;
  spec.patience = 2;
  const std::vector<model::MmoeConfig> cands{toy_config(), toy_config()};
  const auto r = grid_search(cands, [&](std::size_t i, const model::MmoeConfig& c) {
    if (i == 0) return evaluate(model::init_model(c, model::Validation::kRelaxed), val, spec.loss);
    return train_model(c, train, val, spec, model::Validation::kRelaxed).history.best_validation_loss;
  });
  CHECK(r.best == 1);
}

TEST_CASE("strategy labels") {
  CHECK(strategy_slugs().size() == 14);
  CHECK(strategy_label("tsmom_1_4") == "TSMOM(1,4)");
  CHECK(strategy_label("tsmom_12") == "TSMOM(12)");
  CHECK(strategy_label("can") == "UnifiedMom(CAN)");
  CHECK_THROWS_AS(strategy_label("nope"), Error);
}

TEST_CASE("toy walk-forward run") {
  const auto& panel = toy_panel();
  const auto& r = toy_report();
  const auto folds = make_folds(panel.calendar(), 4);
  REQUIRE(r.folds.size() == folds.size());
  CHECK(r.calendar.front() == panel.calendar()[folds.front().test_begin]);
  CHECK(r.calendar.back() == panel.calendar().back());
  CHECK(r.calendar.size() == folds.back().test_end - folds.front().test_begin);
  REQUIRE(r.strategies.size() == 14);
  for (std::size_t k = 0; k < 14; ++k) {
    const auto& s = r.strategies[k];
    CHECK(s.slug == strategy_slugs()[k]);
    CHECK(s.label == strategy_label(s.slug));
    CHECK(s.returns.calendar == r.calendar);
    for (std::size_t t = 0; t < r.calendar.size(); ++t) {
      CHECK(s.returns.net[t] <= s.returns.gross[t]);
      CHECK(s.returns.net[t] ==
            doctest::Approx(s.returns.gross[t] - 3e-4 * s.returns.turnover[t]).epsilon(1e-15).scale(1e-15));
    }
  }
  for (const auto& w : r.allocations.weights) {
    CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) < 1e-9);
    CHECK(std::min({w[0], w[1], w[2]}) >= 0.0);
  }
  // Model books hold a position on most test days.
  std::size_t active = 0;
  for (unsigned char a : r.strategy("can").book.active) active += a;
  CHECK(active + 5 >= r.calendar.size());
}

TEST_CASE("walk-forward is deterministic and causal") {
  const auto& panel = toy_panel();
  const auto& r = toy_report();
  auto cfg = toy_backtest();
  cfg.jobs = 2;
  const auto again = run_backtest(panel, cfg);
  for (std::size_t k = 0; k < r.strategies.size(); ++k) {
    CHECK(again.strategies[k].returns.net == r.strategies[k].returns.net);
  }
  const std::size_t cut_at = panel.n_dates() - 40;
  const auto cut = run_backtest(panel.truncated(cut_at), toy_backtest());
  const std::size_t n = cut.calendar.size();
  REQUIRE(n + 40 == r.calendar.size());
  for (std::size_t k = 0; k < r.strategies.size(); ++k) {
    const auto& a = r.strategies[k].book.weights;
    const auto& b = cut.strategies[k].book.weights;
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < panel.n_assets(); ++i) CHECK(a(t, i) == b(t, i));
    }
  }
}

TEST_CASE("zero cost rate makes net equal gross") {
  auto cfg = toy_backtest();
  cfg.cost_rate = 0.0;
  const auto r = run_backtest(toy_panel(), cfg);
  for (const auto& s : r.strategies) CHECK(s.returns.net == s.returns.gross);
}

TEST_CASE("fold failures name the fold") {
  auto cfg = toy_backtest();
  cfg.first_train_years = 1;  // too little history for any training window
  std::ostringstream log;
  CHECK_THROWS_WITH(run_backtest(toy_panel(), cfg, &log), doctest::Contains("fold 1991"));
}
