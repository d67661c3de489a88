#pragma once

// Expanding-window walk-forward protocol: fold schedule, grid search on the
// validation tail, training with early stopping, and out-of-sample roll-out
// of the model and benchmark strategies.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "unimom/data/panel.hpp"
#include "unimom/diff/adam.hpp"
#include "unimom/features/features.hpp"
#include "unimom/losses/losses.hpp"
#include "unimom/model/mmoe.hpp"
#include "unimom/portfolio/portfolio.hpp"

namespace unimom::backtest {

/// Date-index spans into the panel calendar. Training covers
/// [train_begin, test_begin); its tail [val_begin, test_begin) is the
/// validation set, so the model is fitted on [train_begin, val_begin).
struct Fold {
  int test_year = 0;
  std::size_t train_begin = 0;
  std::size_t val_begin = 0;
  std::size_t test_begin = 0;
  std::size_t test_end = 0;
};

/// One fold per calendar year after the first `first_train_years` years.
/// Throws Error when the calendar does not reach a test year or a fold
/// would get an empty fit or validation span.
std::vector<Fold> make_folds(const std::vector<data::Date>& calendar, int first_train_years = 10,
                             double val_frac = 0.2);

/// Axis values of the hyperparameter grid.
struct GridSpec {
  std::vector<std::size_t> lstm_layers{1, 2, 3};
  std::vector<std::size_t> lstm_hidden{64, 126, 252, 512};
  std::vector<std::size_t> n_experts{3, 6, 9, 12};
  std::vector<std::size_t> task_layers{2, 3, 4};
  std::vector<std::size_t> task_hidden{64, 126, 252, 512};

  std::size_t size() const;
  /// Every combination in lexicographic axis order (layers slowest).
  std::vector<model::MmoeConfig> enumerate(const model::MmoeConfig& base) const;
};

/// `budget` configs drawn without replacement (seeded), returned in grid
/// order. budget >= grid size returns the whole grid. Throws Error for an
/// empty grid or a zero budget.
std::vector<model::MmoeConfig> sample_grid(const std::vector<model::MmoeConfig>& grid,
                                           std::size_t budget, std::uint64_t seed);

struct CandidateResult {
  model::MmoeConfig config;
  double validation_loss = 0.0;
  std::size_t parameter_count = 0;
};

struct GridSearchResult {
  std::size_t best = 0;  // index into candidates
  std::vector<CandidateResult> candidates;
};

/// Returns the validation loss of a trained candidate.
using CandidateTrainer = std::function<double(std::size_t index, const model::MmoeConfig&)>;

/// Trains every candidate (up to `jobs` at once) and selects the minimum
/// validation loss; ties go to the smaller parameter count, then to the
/// earlier candidate. NaN losses never win.
GridSearchResult grid_search(const std::vector<model::MmoeConfig>& candidates,
                             const CandidateTrainer& train, std::size_t jobs = 1);

/// Precomputed panel-wide inputs.
struct MarketData {
  data::PricePanel panel;
  features::FeaturePanel features;
  data::ReturnPanel simple;
};

MarketData prepare_market(const data::PricePanel& panel);

/// Contiguous training windows with their supervision.
struct Dataset {
  std::vector<model::BatchInput> batches;
  std::vector<losses::LossInputs> inputs;

  std::size_t size() const { return batches.size(); }
};

/// Windows of `window` consecutive dates tiling [begin, end). A row is kept
/// when its feature sequence is valid, all three targets computed from
/// prices before `end` exist, and the next-day return (also before `end`)
/// exists. Windows with fewer than two usable dates are dropped.
Dataset make_dataset(const MarketData& market, std::size_t begin, std::size_t end,
                     std::size_t seq_len, std::size_t window);

struct TrainSpec {
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  std::size_t batch_window = 126;
  /// 0 uses every window each epoch; otherwise the first N of the shuffled
  /// order.
  std::size_t max_batches_per_epoch = 0;
  std::uint64_t seed = 0;
  losses::LossOptions loss;
  diff::AdamConfig adam;
};

/// Tracks validation losses and signals when to stop.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, std::size_t max_epochs);

  /// Records one epoch; returns true when training should continue.
  bool record(double validation_loss);
  bool improved() const { return improved_; }
  std::size_t epochs() const { return epochs_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any record
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t max_epochs_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
  bool improved_ = false;
};

struct TrainingHistory {
  std::vector<double> train_loss;       // mean batch loss per epoch
  std::vector<double> validation_loss;  // per epoch
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
};

struct TrainResult {
  model::MmoeModel model;
  TrainingHistory history;
};

/// Mean total loss over a dataset's windows (no gradient recording).
double evaluate(const model::MmoeModel& model, const Dataset& data,
                const losses::LossOptions& options);

/// One Adam update on one window; returns the loss before the update.
double train_step(model::MmoeModel& model, diff::Adam& adam, const model::BatchInput& batch,
                  const losses::LossInputs& inputs, const losses::LossOptions& options);

/// Epochs over shuffled windows with early stopping on validation loss;
/// returns the best-validation snapshot. Throws Error when either dataset
/// is empty.
TrainResult train_model(const model::MmoeConfig& config, const Dataset& train,
                        const Dataset& validation, const TrainSpec& spec,
                        model::Validation mode = model::Validation::kStrict);

struct BacktestConfig {
  int first_train_years = 10;
  double validation_fraction = 0.2;
  GridSpec grid;
  std::size_t grid_budget = 24;
  bool full_grid = false;
  std::uint64_t seed = 7;
  std::size_t sequence_length = 63;
  TrainSpec train;
  double cost_rate = portfolio::kDefaultCostRate;
  double vol_target = portfolio::kDefaultVolTarget;
  portfolio::MvoOptions mvo;
  std::size_t jobs = 1;
  model::Validation validation = model::Validation::kStrict;
};

struct StrategyResult {
  std::string label;
  std::string slug;
  portfolio::StrategyReturns returns;
  portfolio::Book book;
};

struct FoldSummary {
  Fold fold;
  model::MmoeConfig chosen;
  double validation_loss = 0.0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
};

struct BacktestReport {
  std::string loss_name;
  std::vector<data::Date> calendar;  // out-of-sample dates
  std::vector<std::string> assets;
  std::vector<StrategyResult> strategies;  // reporting order
  portfolio::AllocationSeries allocations;
  std::vector<FoldSummary> folds;

  const StrategyResult& strategy(const std::string& slug) const;
};

/// Strategy slugs in reporting order.
const std::vector<std::string>& strategy_slugs();
/// Display label of a slug, e.g. "tsmom_1_4" -> "TSMOM(1,4)".
std::string strategy_label(const std::string& slug);

/// Full walk-forward run. Progress lines go to `log` when set. Errors from a
/// fold are rethrown with its test year.
BacktestReport run_backtest(const data::PricePanel& panel, const BacktestConfig& config,
                            std::ostream* log = nullptr);

}  // namespace unimom::backtest
