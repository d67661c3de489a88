#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace unimom::metrics {

inline constexpr double kDaysPerYear = 252.0;

struct MetricSummary {
  std::string label;
  double ann_return_pct = 0.0;
  double ann_vol_pct = 0.0;
  double sharpe = 0.0;
  double sortino = 0.0;
  double max_drawdown_pct = 0.0;  // <= 0
};

/// Annualised mean (x252) and population vol (x sqrt 252), their ratio,
/// Sortino with downside sqrt(mean over all days of min(r, 0)^2), and the
/// worst drawdown of the compounded equity curve. Ratios with a zero
/// denominator are 0 when the numerator is 0 and +/-inf otherwise. Throws
/// Error for fewer than two returns.
MetricSummary summarize(std::span<const double> daily_returns, std::string label = {});

/// min over t of equity_t / running peak - 1, equity compounded from 1.
double max_drawdown(std::span<const double> daily_returns);

/// (prod (1 + r_s), s <= t) - 1 for every t.
std::vector<double> cumulative_returns(std::span<const double> daily_returns);

}  // namespace unimom::metrics
