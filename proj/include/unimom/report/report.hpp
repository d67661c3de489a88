#pragma once

// CSV output of a backtest run.
//
//   summary.csv           strategy,ann_return_pct,ann_vol_pct,sharpe,sortino,max_dd_pct
//   returns_<slug>.csv    date,gross,net,turnover
//   cumret_<slug>.csv     date,cumret_pct
//   allocations.csv       date,w_fast,w_med,w_slow
//   folds.csv             test_year,lstm_layers,lstm_hidden,n_experts,task_layers,task_hidden,validation_loss,epochs,best_epoch
//   ablation.csv          loss,strategy,ann_return_pct,ann_vol_pct,sharpe,sortino,max_dd_pct
//
// Summary statistics use two decimals. Return, cumulative and allocation
// series are written with 17 significant digits so they reload exactly.

#include <filesystem>
#include <string>
#include <vector>

#include "unimom/backtest/backtest.hpp"
#include "unimom/metrics/metrics.hpp"

namespace unimom::report {

/// Net-return summaries in reporting order.
std::vector<metrics::MetricSummary> summarize(const backtest::BacktestReport& report);

/// Writes every file except ablation.csv. Creates `dir` when missing and
/// throws DataError when it cannot be written.
void emit_report(const backtest::BacktestReport& report, const std::filesystem::path& dir);

/// A run reloaded from its returns_<slug>.csv files.
struct LoadedRun {
  std::vector<std::string> slugs;
  std::vector<portfolio::StrategyReturns> returns;
};

/// Reads the returns files of every known strategy present in `dir`.
/// Throws DataError when none is found.
LoadedRun load_run(const std::filesystem::path& dir);

void write_summary(const std::vector<metrics::MetricSummary>& rows, const std::filesystem::path& file);

/// When `dir` holds softcap/ and sharpe/ runs, writes dir/ablation.csv with
/// one block per loss over the six model strategies. Returns whether it did.
bool emit_ablation(const std::filesystem::path& dir);

/// Rebuilds summary.csv and cumret_*.csv from the returns files in `dir`
/// (and in its softcap/ and sharpe/ subdirectories when present), then the
/// ablation table. Throws DataError when `dir` holds no run at all.
void regenerate(const std::filesystem::path& dir);

}  // namespace unimom::report
