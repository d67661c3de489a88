#pragma once

// Run configuration file: one JSON object, every key optional.
//
//   seed                   uint    sampling, init and shuffle seed (7)
//   first_train_years      int     >= 1 (10)
//   validation_fraction    number  in (0, 1) (0.2)
//   grid_budget            uint    >= 1 (24)
//   full_grid              bool    (false)
//   grid                   object  lstm_layers, lstm_hidden, n_experts,
//                                  task_layers, task_hidden: non-empty uint lists
//   relaxed_model_sizes    bool    allow sizes outside the search space (false)
//   sequence_length        uint    >= 1 (63)
//   batch_window           uint    >= 2 (126)
//   max_epochs             uint    >= 2 (20)
//   patience               uint    in [1, max_epochs) (5)
//   max_batches_per_epoch  uint    0 = all (0)
//   learning_rate          number  > 0 (0.001)
//   tau                    number  > 0 (0.01)
//   loss                   string  softcap | sharpe | softcap-symmetric | both
//   cost_rate              number  >= 0 (0.0003)
//   vol_target             number  > 0 (0.15)
//   mvo                    object  min_history >= 2, rebalance_every >= 1,
//                                  resolution >= 1
//   jobs                   uint    >= 1 (1)
//
// Unknown keys, wrong types and out-of-range values raise DataError.

#include <filesystem>
#include <string>
#include <string_view>

#include "unimom/backtest/backtest.hpp"

namespace unimom::cli {

struct RunConfig {
  backtest::BacktestConfig backtest;
  /// "both" runs softcap and sharpe into sibling directories.
  std::string loss = "softcap";
};

RunConfig parse_run_config(std::string_view json_text, std::string_view origin = "config");
RunConfig load_run_config(const std::filesystem::path& path);

/// Re-checks ranges after command-line overrides.
void validate(const RunConfig& config);

}  // namespace unimom::cli
