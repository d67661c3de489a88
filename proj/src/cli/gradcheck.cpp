#include "unimom/cli/gradcheck.hpp"

#include "unimom/backtest/backtest.hpp"
#include "unimom/error.hpp"

namespace unimom::cli {

diff::GradCheckReport toy_gradcheck(const ToyGradcheckOptions& o) {
  constexpr std::size_t kYears = 2;
  const data::PricePanel panel = data::synthesize_panel(
      o.seed, o.n_assets, kYears, data::planted_trend_regimes(o.seed, o.n_assets, kYears));
  // First date with a full feature history and a sequence behind it.
  const std::size_t begin = features::kLookbacks.back() + o.sequence_length;
  const backtest::Dataset data =
      backtest::make_dataset(backtest::prepare_market(panel), begin, panel.n_dates(),
                             o.sequence_length, o.batch_window);
  if (data.size() == 0) throw Error("gradcheck: toy panel produced no training window");

  model::MmoeConfig cfg;
  cfg.n_experts = o.n_experts;
  cfg.lstm_layers = 1;
  cfg.lstm_hidden = o.lstm_hidden;
  cfg.task_layers = 2;
  cfg.task_hidden = o.lstm_hidden;
  cfg.sequence_length = o.sequence_length;
  cfg.seed = o.seed;
  model::MmoeModel m = model::init_model(cfg, model::Validation::kRelaxed);
  const model::BatchInput& batch = data.batches.front();
  const losses::LossInputs& inputs = data.inputs.front();
  const diff::LossBuilder build = [&](diff::Tape& tape, std::span<const diff::Var> params) {
    return losses::total_loss(tape, m, params, batch, inputs, o.loss).total;
  };
  return diff::finite_diff_check(build, m.parameters(), o.step, o.max_coords_per_param);
}

}  // namespace unimom::cli
