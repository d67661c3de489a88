#include "unimom/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "unimom/error.hpp"

namespace unimom::metrics {

namespace {

double ratio(double num, double den) {
  if (den > 0.0) return num / den;
  return num == 0.0 ? 0.0 : std::copysign(INFINITY, num);
}

}  // namespace

MetricSummary summarize(std::span<const double> r, std::string label) {
  if (r.size() < 2) throw Error("summarize needs at least two returns");
  const double n = static_cast<double>(r.size());
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= n;
  double var = 0.0;
  double down = 0.0;
  for (double x : r) {
    var += (x - mean) * (x - mean);
    const double neg = std::min(x, 0.0);
    down += neg * neg;
  }
  const double vol = std::sqrt(var / n);
  const double downside = std::sqrt(down / n);
  const double root_year = std::sqrt(kDaysPerYear);

  MetricSummary s;
  s.label = std::move(label);
  s.ann_return_pct = 100.0 * mean * kDaysPerYear;
  s.ann_vol_pct = 100.0 * vol * root_year;
  s.sharpe = ratio(mean * kDaysPerYear, vol * root_year);
  s.sortino = ratio(mean * kDaysPerYear, downside * root_year);
  s.max_drawdown_pct = 100.0 * max_drawdown(r);
  return s;
}

double max_drawdown(std::span<const double> r) {
  double equity = 1.0;
  double peak = 1.0;
  double worst = 0.0;
  for (double x : r) {
    equity *= 1.0 + x;
    peak = std::max(peak, equity);
    worst = std::min(worst, equity / peak - 1.0);
  }
  return worst;
}

std::vector<double> cumulative_returns(std::span<const double> r) {
  std::vector<double> out;
  out.reserve(r.size());
  double equity = 1.0;
  for (double x : r) {
    equity *= 1.0 + x;
    out.push_back(equity - 1.0);
  }
  return out;
}

}  // namespace unimom::metrics
