#include "unimom/report/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "unimom/error.hpp"

namespace unimom::report {

namespace fs = std::filesystem;

namespace {

constexpr const char* kSummaryHeader = "strategy,ann_return_pct,ann_vol_pct,sharpe,sortino,max_dd_pct";
const std::vector<std::string> kModelSlugs{"fast", "medium", "slow", "can", "eqwt", "mvo"};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string full(double v) { return fmt("%.17g", v); }
std::string two(double v) { return fmt("%.2f", v); }

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& file) : path_(file), out_(file, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + file.string());
  }
  std::ostream& line() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw DataError("write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

void write_cumret(const portfolio::StrategyReturns& r, const fs::path& file) {
  CsvWriter w(file);
  w.line() << "date,cumret_pct\n";
  const std::vector<double> cum = metrics::cumulative_returns(r.net);
  for (std::size_t t = 0; t < cum.size(); ++t) {
    w.line() << data::format_date(r.calendar[t]) << ',' << full(100.0 * cum[t]) << '\n';
  }
  w.close();
}

void write_returns(const portfolio::StrategyReturns& r, const fs::path& file) {
  CsvWriter w(file);
  w.line() << "date,gross,net,turnover\n";
  for (std::size_t t = 0; t < r.calendar.size(); ++t) {
    w.line() << data::format_date(r.calendar[t]) << ',' << full(r.gross[t]) << ','
             << full(r.net[t]) << ',' << full(r.turnover[t]) << '\n';
  }
  w.close();
}

std::string summary_row(const metrics::MetricSummary& s) {
  return s.label + ',' + two(s.ann_return_pct) + ',' + two(s.ann_vol_pct) + ',' + two(s.sharpe) +
         ',' + two(s.sortino) + ',' + two(s.max_drawdown_pct);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_number(const std::string& s, const fs::path& file, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError(file.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

portfolio::StrategyReturns read_returns(const fs::path& file, std::string label) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::string text;
  std::getline(in, text);
  if (text != "date,gross,net,turnover") throw DataError(file.string() + ": unexpected header");
  portfolio::StrategyReturns r;
  r.label = std::move(label);
  std::size_t line = 1;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    const auto cells = split(text);
    if (cells.size() != 4) {
      throw DataError(file.string() + ":" + std::to_string(line) + ": expected 4 fields");
    }
    r.calendar.push_back(data::parse_date(cells[0]));
    r.gross.push_back(parse_number(cells[1], file, line));
    r.net.push_back(parse_number(cells[2], file, line));
    r.turnover.push_back(parse_number(cells[3], file, line));
    r.valid.push_back(1);
  }
  return r;
}

bool has_run(const fs::path& dir) {
  for (const std::string& slug : backtest::strategy_slugs()) {
    if (fs::exists(dir / ("returns_" + slug + ".csv"))) return true;
  }
  return false;
}

void rewrite(const fs::path& dir) {
  const LoadedRun run = load_run(dir);
  std::vector<metrics::MetricSummary> rows;
  for (std::size_t k = 0; k < run.slugs.size(); ++k) {
    rows.push_back(metrics::summarize(run.returns[k].net, run.returns[k].label));
    write_cumret(run.returns[k], dir / ("cumret_" + run.slugs[k] + ".csv"));
  }
  write_summary(rows, dir / "summary.csv");
}

}  // namespace

std::vector<metrics::MetricSummary> summarize(const backtest::BacktestReport& report) {
  std::vector<metrics::MetricSummary> out;
  for (const backtest::StrategyResult& s : report.strategies) {
    out.push_back(metrics::summarize(s.returns.net, s.label));
  }
  return out;
}

void write_summary(const std::vector<metrics::MetricSummary>& rows, const fs::path& file) {
  CsvWriter w(file);
  w.line() << kSummaryHeader << '\n';
  for (const auto& s : rows) w.line() << summary_row(s) << '\n';
  w.close();
}

void emit_report(const backtest::BacktestReport& report, const fs::path& dir) {
  ensure_dir(dir);
  write_summary(summarize(report), dir / "summary.csv");
  for (const backtest::StrategyResult& s : report.strategies) {
    write_returns(s.returns, dir / ("returns_" + s.slug + ".csv"));
    write_cumret(s.returns, dir / ("cumret_" + s.slug + ".csv"));
  }
  {
    CsvWriter w(dir / "allocations.csv");
    w.line() << "date,w_fast,w_med,w_slow\n";
    const auto& a = report.allocations;
    for (std::size_t t = 0; t < a.calendar.size(); ++t) {
      w.line() << data::format_date(a.calendar[t]) << ',' << full(a.weights[t][0]) << ','
               << full(a.weights[t][1]) << ',' << full(a.weights[t][2]) << '\n';
    }
    w.close();
  }
  CsvWriter w(dir / "folds.csv");
  w.line() << "test_year,lstm_layers,lstm_hidden,n_experts,task_layers,task_hidden,"
              "validation_loss,epochs,best_epoch\n";
  for (const backtest::FoldSummary& f : report.folds) {
    const auto& c = f.chosen;
    w.line() << f.fold.test_year << ',' << c.lstm_layers << ',' << c.lstm_hidden << ','
             << c.n_experts << ',' << c.task_layers << ',' << c.task_hidden << ','
             << full(f.validation_loss) << ',' << f.epochs << ',' << f.best_epoch << '\n';
  }
  w.close();
}

LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  for (const std::string& slug : backtest::strategy_slugs()) {
    const fs::path file = dir / ("returns_" + slug + ".csv");
    if (!fs::exists(file)) continue;
    run.slugs.push_back(slug);
    run.returns.push_back(read_returns(file, backtest::strategy_label(slug)));
  }
  if (run.slugs.empty()) throw DataError("no strategy returns found in " + dir.string());
  return run;
}

bool emit_ablation(const fs::path& dir) {
  const fs::path soft = dir / "softcap";
  const fs::path plain = dir / "sharpe";
  if (!has_run(soft) || !has_run(plain)) return false;
  CsvWriter w(dir / "ablation.csv");
  w.line() << "loss," << kSummaryHeader << '\n';
  for (const auto& [name, sub] : {std::pair{"softcap", soft}, std::pair{"sharpe", plain}}) {
    const LoadedRun run = load_run(sub);
    for (const std::string& slug : kModelSlugs) {
      for (std::size_t k = 0; k < run.slugs.size(); ++k) {
        if (run.slugs[k] != slug) continue;
        w.line() << name << ',' << summary_row(metrics::summarize(run.returns[k].net, run.returns[k].label))
                 << '\n';
      }
    }
  }
  w.close();
  return true;
}

void regenerate(const fs::path& dir) {
  bool any = false;
  for (const fs::path& d : {dir, dir / "softcap", dir / "sharpe"}) {
    if (!has_run(d)) continue;
    rewrite(d);
    any = true;
  }
  if (!any) throw DataError("no backtest output found in " + dir.string());
  emit_ablation(dir);
}

}  // namespace unimom::report
