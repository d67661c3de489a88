#include "unimom/cli/app.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <iomanip>
#include <optional>
#include <ostream>

#include "unimom/cli/config.hpp"
#include "unimom/cli/gradcheck.hpp"
#include "unimom/error.hpp"
#include "unimom/features/features.hpp"
#include "unimom/report/report.hpp"
#include "unimom/targets/targets.hpp"

namespace unimom::cli {

namespace fs = std::filesystem;

namespace {

data::Layout layout_of(const std::string& name) {
  const auto l = data::parse_layout(name);
  if (!l) throw DataError("unknown layout " + name);
  return *l;
}

std::optional<std::size_t> env_jobs() {
  const char* v = std::getenv("UNIMOM_JOBS");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw DataError(std::string("UNIMOM_JOBS must be a positive integer, got ") + v);
  return static_cast<std::size_t>(n);
}

struct BacktestArgs {
  std::string panel;
  std::string layout = "long";
  std::string config;
  std::string out = "results";
  bool full_grid = false;
  std::optional<std::string> loss;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget;
  std::optional<int> first_train_years;
  std::optional<std::size_t> max_epochs;
  bool quiet = false;
};

void run_backtest_command(const BacktestArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  auto& b = cfg.backtest;
  if (const auto j = env_jobs()) b.jobs = *j;
  if (a.jobs) b.jobs = *a.jobs;
  if (a.full_grid) b.full_grid = true;
  if (a.loss) cfg.loss = *a.loss;
  if (a.seed) b.seed = b.train.seed = *a.seed;
  if (a.budget) b.grid_budget = *a.budget;
  if (a.first_train_years) b.first_train_years = *a.first_train_years;
  if (a.max_epochs) b.train.max_epochs = *a.max_epochs;
  validate(cfg);

  const data::PricePanel panel = data::load_panel(a.panel, layout_of(a.layout));
  std::ostream* log = a.quiet ? nullptr : &err;
  const fs::path dir = a.out;
  auto one = [&](losses::SharpeTerm term, const fs::path& where) {
    backtest::BacktestConfig run = b;
    run.train.loss.term = term;
    const backtest::BacktestReport report = backtest::run_backtest(panel, run, log);
    report::emit_report(report, where);
    out << "wrote " << where.string() << " (" << report.folds.size() << " folds, "
        << report.calendar.size() << " out-of-sample days)\n";
  };
  if (cfg.loss == "both") {
    one(losses::SharpeTerm::kSoftCap, dir / "softcap");
    one(losses::SharpeTerm::kSharpe, dir / "sharpe");
    if (report::emit_ablation(dir)) out << "wrote " << (dir / "ablation.csv").string() << "\n";
  } else {
    one(*losses::parse_sharpe_term(cfg.loss), dir);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task momentum toolkit", "unimom"};
  app.require_subcommand(1);

  std::string input, layout = "long", out_path, panel_path, in_dir;
  auto* ingest = app.add_subcommand("ingest", "Load raw prices and write the canonical panel file");
  ingest->add_option("--input", input, "Long-format file or per-asset directory")->required();
  ingest->add_option("--layout", layout, "long | per-asset")->check(CLI::IsMember({"long", "per-asset"}));
  ingest->add_option("--out", out_path, "Canonical panel file")->required();

  std::uint64_t seed = 7;
  std::size_t assets = 8, years = 15, segment_days = 0;
  data::TrendOptions trend;
  auto* synth = app.add_subcommand("synth", "Write a synthetic planted-trend panel");
  synth->add_option("--seed", seed);
  synth->add_option("--assets", assets)->check(CLI::PositiveNumber);
  synth->add_option("--years", years)->check(CLI::PositiveNumber);
  synth->add_option("--segment-days", segment_days, "Regime length; 0 keeps one drift per asset");
  synth->add_option("--drift", trend.drift_per_day, "Daily log drift magnitude");
  synth->add_option("--min-vol", trend.min_volatility);
  synth->add_option("--max-vol", trend.max_volatility);
  synth->add_option("--out", out_path)->required();

  auto* feats = app.add_subcommand("features", "Write the momentum feature file");
  feats->add_option("--panel", panel_path)->required();
  feats->add_option("--layout", layout)->check(CLI::IsMember({"long", "per-asset"}));
  feats->add_option("--out", out_path)->required();

  std::size_t horizon = 0;
  auto* targs = app.add_subcommand("targets", "Write one forward target slice");
  targs->add_option("--panel", panel_path)->required();
  targs->add_option("--layout", layout)->check(CLI::IsMember({"long", "per-asset"}));
  targs->add_option("--horizon", horizon)->required()->check(CLI::IsMember({20, 60, 120}));
  targs->add_option("--out", out_path)->required();

  BacktestArgs bt;
  auto* back = app.add_subcommand("backtest", "Walk-forward training and out-of-sample report");
  back->add_option("--panel", bt.panel)->required();
  back->add_option("--layout", bt.layout)->check(CLI::IsMember({"long", "per-asset"}));
  back->add_option("--config", bt.config, "JSON run configuration");
  back->add_option("--out", bt.out, "Output directory")->capture_default_str();
  back->add_flag("--full-grid", bt.full_grid, "Train every grid point instead of a sample");
  back->add_option("--loss", bt.loss, "softcap | sharpe | softcap-symmetric | both")
      ->check(CLI::IsMember({"softcap", "sharpe", "softcap-symmetric", "both"}));
  back->add_option("--jobs", bt.jobs, "Parallel candidates (UNIMOM_JOBS when unset)")
      ->check(CLI::PositiveNumber);
  back->add_option("--seed", bt.seed);
  back->add_option("--budget", bt.budget, "Sampled grid size")->check(CLI::PositiveNumber);
  back->add_option("--first-train-years", bt.first_train_years)->check(CLI::PositiveNumber);
  back->add_option("--max-epochs", bt.max_epochs);
  back->add_flag("--quiet", bt.quiet, "No progress log");

  auto* rep = app.add_subcommand("report", "Rebuild summaries from a backtest directory");
  rep->add_option("--in", in_dir)->required();

  ToyGradcheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the training loss");
  grad->add_option("--seed", gc.seed);
  grad->add_option("--coords", gc.max_coords_per_param, "Coordinates per parameter; 0 = all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n" << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (ingest->parsed()) {
      const auto p = data::load_panel(input, layout_of(layout));
      data::save_panel(p, out_path);
      out << "wrote " << out_path << " (" << p.n_assets() << " assets, " << p.n_dates() << " dates)\n";
    } else if (synth->parsed()) {
      trend.segment_days = segment_days;
      const auto p = data::synthesize_panel(seed, assets, years,
                                            data::planted_trend_regimes(seed, assets, years, trend));
      data::save_panel(p, out_path);
      out << "wrote " << out_path << " (" << p.n_assets() << " assets, " << p.n_dates() << " dates)\n";
    } else if (feats->parsed()) {
      features::save_features(features::momentum_features(data::load_panel(panel_path, layout_of(layout))),
                              out_path);
      out << "wrote " << out_path << "\n";
    } else if (targs->parsed()) {
      const auto p = data::load_panel(panel_path, layout_of(layout));
      targets::save_targets(targets::forward_tsmom(p, horizon), p, out_path);
      out << "wrote " << out_path << "\n";
    } else if (back->parsed()) {
      run_backtest_command(bt, out, err);
    } else if (rep->parsed()) {
      report::regenerate(in_dir);
      out << "regenerated " << in_dir << "\n";
    } else if (grad->parsed()) {
      const auto r = toy_gradcheck(gc);
      out << "max relative error " << std::setprecision(3) << std::scientific << r.max_rel_error
          << " over " << r.coordinates_checked << " coordinates (worst: " << r.worst_parameter
          << "[" << r.worst_index << "])\n";
      if (!(r.max_rel_error < 1e-4)) {
        err << "error: gradient check above tolerance 1e-4\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace unimom::cli
