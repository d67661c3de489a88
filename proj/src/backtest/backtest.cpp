#include "unimom/backtest/backtest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <thread>
#include <type_traits>

#include "unimom/diff/ops.hpp"
#include "unimom/error.hpp"
#include "unimom/targets/targets.hpp"

namespace unimom::backtest {

using model::MmoeConfig;
using model::MmoeModel;

std::vector<Fold> make_folds(const std::vector<data::Date>& calendar, int first_train_years,
                             double val_frac) {
  if (calendar.empty()) throw Error("make_folds: empty calendar");
  if (first_train_years < 1) throw Error("make_folds: first_train_years must be >= 1");
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw Error("make_folds: validation fraction must be in (0, 1)");
  const int first_year = data::year_of(calendar.front());
  const int last_year = data::year_of(calendar.back());
  const int first_test = first_year + first_train_years;
  if (first_test > last_year) {
    throw Error("make_folds: calendar covers " + std::to_string(first_year) + "-" +
                std::to_string(last_year) + ", need at least " +
                std::to_string(first_train_years + 1) + " calendar years");
  }
  auto year_start = [&](int y) {
    const data::Date d = std::chrono::sys_days{std::chrono::year{y} / std::chrono::January / 1};
    return static_cast<std::size_t>(std::lower_bound(calendar.begin(), calendar.end(), d) -
                                    calendar.begin());
  };
  std::vector<Fold> folds;
  for (int y = first_test; y <= last_year; ++y) {
    Fold f;
    f.test_year = y;
    f.test_begin = year_start(y);
    f.test_end = year_start(y + 1);
    if (f.test_begin == f.test_end) continue;
    const auto val_len =
        static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(f.test_begin)));
    if (val_len == 0 || val_len >= f.test_begin) {
      throw Error("make_folds: fold " + std::to_string(y) + " has an empty fit or validation span");
    }
    f.val_begin = f.test_begin - val_len;
    folds.push_back(f);
  }
  return folds;
}

std::size_t GridSpec::size() const {
  return lstm_layers.size() * lstm_hidden.size() * n_experts.size() * task_layers.size() *
         task_hidden.size();
}

std::vector<MmoeConfig> GridSpec::enumerate(const MmoeConfig& base) const {
  std::vector<MmoeConfig> out;
  out.reserve(size());
  for (std::size_t a : lstm_layers)
    for (std::size_t b : lstm_hidden)
      for (std::size_t c : n_experts)
        for (std::size_t d : task_layers)
          for (std::size_t e : task_hidden) {
            MmoeConfig cfg = base;
            cfg.lstm_layers = a;
            cfg.lstm_hidden = b;
            cfg.n_experts = c;
            cfg.task_layers = d;
            cfg.task_hidden = e;
            out.push_back(cfg);
          }
  return out;
}

std::vector<MmoeConfig> sample_grid(const std::vector<MmoeConfig>& grid, std::size_t budget,
                                    std::uint64_t seed) {
  if (grid.empty()) throw Error("grid search: empty grid");
  if (budget == 0) throw Error("grid search: budget must be positive");
  if (budget >= grid.size()) return grid;
  std::vector<std::size_t> idx(grid.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(budget);
  std::sort(idx.begin(), idx.end());
  std::vector<MmoeConfig> out;
  for (std::size_t i : idx) out.push_back(grid[i]);
  return out;
}

GridSearchResult grid_search(const std::vector<MmoeConfig>& candidates,
                             const CandidateTrainer& train, std::size_t jobs) {
  if (candidates.empty()) throw Error("grid search: empty grid");
  const std::size_t n = candidates.size();
  GridSearchResult res;
  res.candidates.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        res.candidates[i].config = candidates[i];
        res.candidates[i].parameter_count = model::parameter_count(candidates[i]);
        res.candidates[i].validation_loss = train(i, candidates[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < n; ++i) {
    const CandidateResult& c = res.candidates[i];
    if (std::isnan(c.validation_loss)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const CandidateResult& b = res.candidates[*best];
    if (c.validation_loss < b.validation_loss ||
        (c.validation_loss == b.validation_loss && c.parameter_count < b.parameter_count)) {
      best = i;
    }
  }
  if (!best) throw Error("grid search: every candidate produced a NaN validation loss");
  res.best = *best;
  return res;
}

MarketData prepare_market(const data::PricePanel& panel) {
  return {panel, features::momentum_features(panel), data::simple_returns(panel)};
}

Dataset make_dataset(const MarketData& m, std::size_t begin, std::size_t end, std::size_t seq_len,
                     std::size_t window) {
  if (window < 2) throw Error("make_dataset: batch window must be at least 2 dates");
  end = std::min(end, m.panel.n_dates());
  Dataset out;
  if (begin >= end) return out;
  // Targets from prices strictly before `end` only.
  const targets::TargetPanel tp = targets::all_targets(m.panel.truncated(end));
  auto include = [&](std::size_t t, std::size_t i) {
    if (t + 1 >= end || !m.simple.valid(t + 1, i)) return false;
    for (const auto& s : tp.slices) {
      if (!s.valid(t, i)) return false;
    }
    return true;
  };
  std::vector<std::size_t> dates;
  for (std::size_t w = begin; w < end; w += window) {
    dates.clear();
    for (std::size_t t = w; t < std::min(w + window, end); ++t) dates.push_back(t);
    model::BatchInput batch = model::assemble_input(m.features, dates, seq_len, include);
    if (batch.n_dates() < 2) continue;
    out.inputs.push_back(losses::gather_loss_inputs(batch, tp, m.simple));
    out.batches.push_back(std::move(batch));
  }
  return out;
}

EarlyStopper::EarlyStopper(std::size_t patience, std::size_t max_epochs)
    : patience_(patience), max_epochs_(max_epochs) {
  if (max_epochs == 0 || patience == 0 || patience >= max_epochs) {
    throw Error("early stopping needs 0 < patience < max_epochs");
  }
}

bool EarlyStopper::record(double v) {
  ++epochs_;
  improved_ = epochs_ == 1 || v < best_ || (std::isnan(best_) && !std::isnan(v));
  if (improved_) {
    best_ = v;
    best_epoch_ = epochs_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return epochs_ < max_epochs_ && since_best_ < patience_;
}

double evaluate(const MmoeModel& model, const Dataset& data, const losses::LossOptions& options) {
  if (data.size() == 0) throw Error("evaluate: empty dataset");
  double sum = 0.0;
  for (std::size_t b = 0; b < data.size(); ++b) {
    diff::Tape tape(false);
    const auto leaves = model::bind(tape, model, false);
    sum += losses::total_loss(tape, model, leaves, data.batches[b], data.inputs[b], options)
               .total.value()
               .item();
  }
  return sum / static_cast<double>(data.size());
}

double train_step(MmoeModel& model, diff::Adam& adam, const model::BatchInput& batch,
                  const losses::LossInputs& inputs, const losses::LossOptions& options) {
  diff::Tape tape;
  const auto leaves = model::bind(tape, model, true);
  const auto loss = losses::total_loss(tape, model, leaves, batch, inputs, options);
  const diff::GradientMap grads = tape.backward(loss.total);
  std::vector<diff::Tensor> g;
  g.reserve(leaves.size());
  for (const diff::Var& leaf : leaves) g.push_back(grads[leaf]);
  const double value = loss.total.value().item();
  adam.step(model.parameters(), std::move(g));
  return value;
}

TrainResult train_model(const MmoeConfig& config, const Dataset& train, const Dataset& validation,
                        const TrainSpec& spec, model::Validation mode) {
  if (train.size() == 0) throw Error("train_model: no usable training windows (all rows masked)");
  if (validation.size() == 0) throw Error("train_model: no usable validation windows");
  MmoeModel model = model::init_model(config, mode);
  diff::Adam adam(spec.adam);
  EarlyStopper stopper(spec.patience, spec.max_epochs);
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per_epoch =
      spec.max_batches_per_epoch == 0 ? train.size() : std::min(spec.max_batches_per_epoch, train.size());

  TrainResult result{model, {}};
  while (true) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t j = 0; j < per_epoch; ++j) {
      sum += train_step(model, adam, train.batches[order[j]], train.inputs[order[j]], spec.loss);
    }
    result.history.train_loss.push_back(sum / static_cast<double>(per_epoch));
    const double v = evaluate(model, validation, spec.loss);
    result.history.validation_loss.push_back(v);
    const bool more = stopper.record(v);
    if (stopper.improved()) result.model = model;
    if (!more) break;
  }
  result.history.best_epoch = stopper.best_epoch();
  result.history.best_validation_loss = stopper.best_loss();
  return result;
}

const StrategyResult& BacktestReport::strategy(const std::string& slug) const {
  for (const StrategyResult& s : strategies) {
    if (s.slug == slug) return s;
  }
  throw Error("no strategy " + slug + " in report");
}

const std::vector<std::string>& strategy_slugs() {
  static const std::vector<std::string> slugs{
      "tsmom_1",    "tsmom_3",    "tsmom_6",     "tsmom_12", "tsmom_1_4", "tsmom_5_8", "tsmom_9_12",
      "tsmom_1_12", "fast",       "medium",      "slow",     "can",       "eqwt",      "mvo"};
  return slugs;
}

std::string strategy_label(const std::string& slug) {
  static const std::pair<const char*, const char*> fixed[] = {
      {"fast", "UnifiedMom(Fast)"}, {"medium", "UnifiedMom(Medium)"}, {"slow", "UnifiedMom(Slow)"},
      {"can", "UnifiedMom(CAN)"},   {"eqwt", "UnifiedMom(EQWT)"},     {"mvo", "UnifiedMom(MVO)"}};
  for (const auto& [s, label] : fixed) {
    if (slug == s) return label;
  }
  if (slug.rfind("tsmom_", 0) == 0) {
    std::string args = slug.substr(6);
    std::replace(args.begin(), args.end(), '_', ',');
    return "TSMOM(" + args + ")";
  }
  throw Error("unknown strategy " + slug);
}

namespace {

portfolio::StrategyReturns slice_returns(const portfolio::StrategyReturns& s, std::size_t b,
                                         std::size_t e) {
  auto cut = [&](const auto& v) {
    using V = std::decay_t<decltype(v)>;
    return V(v.begin() + static_cast<std::ptrdiff_t>(b), v.begin() + static_cast<std::ptrdiff_t>(e));
  };
  return {s.label, cut(s.calendar), cut(s.gross), cut(s.net), cut(s.turnover), cut(s.valid),
          s.cost_rate};
}

constexpr std::array<const char*, model::kNumTasks> kTaskLabels{"Fast", "Medium", "Slow"};

}  // namespace

BacktestReport run_backtest(const data::PricePanel& panel, const BacktestConfig& cfg,
                            std::ostream* log) {
  const MarketData market = prepare_market(panel);
  const std::vector<Fold> folds =
      make_folds(panel.calendar(), cfg.first_train_years, cfg.validation_fraction);

  MmoeConfig base;
  base.sequence_length = cfg.sequence_length;
  base.seed = cfg.seed;
  const std::vector<MmoeConfig> grid = cfg.grid.enumerate(base);
  const std::vector<MmoeConfig> candidates =
      cfg.full_grid ? grid : sample_grid(grid, cfg.grid_budget, cfg.seed);
  for (const MmoeConfig& c : candidates) model::validate(c, cfg.validation);

  const std::size_t T = panel.n_dates();
  const std::size_t N = panel.n_assets();
  std::array<portfolio::WeightPanel, model::kNumTasks> signals;
  for (auto& s : signals) s = {"", panel.calendar(), Grid<double>(T, N, 0.0), Mask(T, N, 0)};
  const double third = 1.0 / 3.0;
  std::vector<std::array<double, 3>> alloc(T, {third, third, third});

  BacktestReport report;
  report.loss_name = std::string(losses::to_string(cfg.train.loss.term));
  std::mutex log_mu;

  for (const Fold& fold : folds) {
    try {
      const Dataset train_ds = make_dataset(market, fold.train_begin, fold.val_begin,
                                            cfg.sequence_length, cfg.train.batch_window);
      const Dataset val_ds = make_dataset(market, fold.val_begin, fold.test_begin,
                                          cfg.sequence_length, cfg.train.batch_window);
      std::vector<std::optional<TrainResult>> trained(candidates.size());
      const GridSearchResult gs = grid_search(
          candidates,
          [&](std::size_t i, const MmoeConfig& c) {
            TrainResult r = train_model(c, train_ds, val_ds, cfg.train, cfg.validation);
            const double v = r.history.best_validation_loss;
            if (log) {
              std::lock_guard<std::mutex> lock(log_mu);
              *log << "fold " << fold.test_year << " candidate " << i + 1 << "/" << candidates.size()
                   << " [" << model::describe(c) << "] epochs " << r.history.validation_loss.size()
                   << " best " << r.history.best_epoch << " val " << v << "\n";
            }
            trained[i] = std::move(r);
            return v;
          },
          cfg.jobs);
      const TrainResult& winner = *trained[gs.best];
      report.folds.push_back({fold, candidates[gs.best], winner.history.best_validation_loss,
                              winner.history.validation_loss.size(), winner.history.best_epoch});

      // Decisions at the close of d set the positions held over d + 1.
      const std::size_t first = fold.test_begin == 0 ? 0 : fold.test_begin - 1;
      for (std::size_t d0 = first; d0 + 1 < fold.test_end; d0 += cfg.train.batch_window) {
        std::vector<std::size_t> dates;
        for (std::size_t d = d0; d < std::min(d0 + cfg.train.batch_window, fold.test_end - 1); ++d) {
          dates.push_back(d);
        }
        const model::BatchInput batch =
            model::assemble_input(market.features, dates, cfg.sequence_length);
        if (batch.n_rows() == 0) continue;
        const model::Prediction pred = model::predict(winner.model, batch);
        for (std::size_t j = 0; j < batch.n_dates(); ++j) {
          const std::size_t t = batch.dates[j] + 1;
          for (std::size_t r = batch.offsets[j]; r < batch.offsets[j + 1]; ++r) {
            for (std::size_t k = 0; k < model::kNumTasks; ++k) {
              signals[k].weights(t, batch.rows[r].asset) = pred.scores[k][r];
              signals[k].valid(t, batch.rows[r].asset) = 1;
            }
          }
          alloc[t] = pred.allocation[j];
        }
      }
      if (log) {
        *log << "fold " << fold.test_year << " selected [" << model::describe(candidates[gs.best])
             << "] val " << winner.history.best_validation_loss << "\n";
      }
    } catch (const std::exception& e) {
      throw Error("fold " + std::to_string(fold.test_year) + ": " + e.what());
    }
  }

  const std::size_t b = folds.front().test_begin;
  const std::size_t e = folds.back().test_end;
  report.calendar.assign(panel.calendar().begin() + static_cast<std::ptrdiff_t>(b),
                         panel.calendar().begin() + static_cast<std::ptrdiff_t>(e));
  for (const data::Asset& a : panel.assets()) report.assets.push_back(a.id);
  report.allocations.calendar = report.calendar;
  report.allocations.weights.assign(alloc.begin() + static_cast<std::ptrdiff_t>(b),
                                    alloc.begin() + static_cast<std::ptrdiff_t>(e));

  auto add_book = [&](std::string label, std::string slug, const portfolio::Book& full) {
    const portfolio::StrategyReturns gross = portfolio::gross_returns(full, market.simple);
    portfolio::Book book = portfolio::slice(full, b, e);
    portfolio::StrategyReturns r =
        portfolio::apply_costs(book, slice_returns(gross, b, e), cfg.cost_rate);
    r.label = book.label = label;
    report.strategies.push_back({std::move(label), std::move(slug), std::move(r), std::move(book)});
  };
  for (std::size_t k : {1u, 3u, 6u, 12u}) {
    add_book("TSMOM(" + std::to_string(k) + ")", "tsmom_" + std::to_string(k),
             portfolio::to_book(portfolio::tsmom_weights(panel, k, cfg.vol_target)));
  }
  const std::vector<std::vector<std::size_t>> combos{
      {1, 2, 3, 4}, {5, 6, 7, 8}, {9, 10, 11, 12}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}};
  for (const auto& members : combos) {
    const std::string a = std::to_string(members.front());
    const std::string z = std::to_string(members.back());
    add_book("TSMOM(" + a + "," + z + ")", "tsmom_" + a + "_" + z,
             portfolio::combo_book(panel, members, cfg.vol_target));
  }
  std::array<const portfolio::Book*, 3> task_books{};
  std::array<const portfolio::StrategyReturns*, 3> task_gross{};
  std::array<portfolio::StrategyReturns, 3> task_gross_store;
  for (std::size_t k = 0; k < model::kNumTasks; ++k) {
    add_book(std::string("UnifiedMom(") + kTaskLabels[k] + ")", model::kTaskNames[k],
             portfolio::to_book(signals[k]));
  }
  const std::size_t first_task = report.strategies.size() - model::kNumTasks;
  for (std::size_t k = 0; k < model::kNumTasks; ++k) {
    task_books[k] = &report.strategies[first_task + k].book;
    task_gross_store[k] = report.strategies[first_task + k].returns;
    task_gross[k] = &task_gross_store[k];
  }

  auto add_mix = [&](std::string label, std::string slug, const portfolio::AllocationSeries& a) {
    portfolio::Book book = portfolio::fuse_books(a, task_books);
    portfolio::StrategyReturns r =
        portfolio::apply_costs(book, portfolio::unified_return(a, task_gross), cfg.cost_rate);
    r.label = book.label = label;
    return StrategyResult{std::move(label), std::move(slug), std::move(r), std::move(book)};
  };
  std::vector<StrategyResult> mixes;
  mixes.push_back(add_mix("UnifiedMom(CAN)", "can", report.allocations));
  mixes.push_back(add_mix("UnifiedMom(EQWT)", "eqwt",
                          portfolio::constant_allocation(report.calendar, {third, third, third})));
  mixes.push_back(add_mix("UnifiedMom(MVO)", "mvo", portfolio::mvo_allocations(task_gross, cfg.mvo)));
  for (auto& m : mixes) report.strategies.push_back(std::move(m));
  return report;
}

}  // namespace unimom::backtest
