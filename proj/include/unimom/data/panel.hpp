#pragma once

// Continuous-futures price panels: loading, saving, synthesis and returns.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unimom/grid.hpp"

namespace unimom::data {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD; throws DataError on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);
int year_of(Date d);

enum class AssetClass { kCommodity, kCurrency, kFixedIncome, kEquityIndex, kUnknown };

std::string_view to_string(AssetClass c);

struct Asset {
  std::string id;
  AssetClass asset_class = AssetClass::kUnknown;

  bool operator==(const Asset&) const = default;
};

/// Calendar-aligned back-adjusted settlement prices. Rows are dates, columns
/// assets. Immutable after construction.
class PricePanel {
 public:
  PricePanel() = default;
  /// Validates: strictly increasing calendar, matching grid sizes, positive
  /// valid prices, one contiguous valid interval per asset.
  PricePanel(std::vector<Asset> assets, std::vector<Date> calendar, Grid<double> prices, Mask valid);

  std::size_t n_dates() const { return calendar_.size(); }
  std::size_t n_assets() const { return assets_.size(); }
  const std::vector<Asset>& assets() const { return assets_; }
  const std::vector<Date>& calendar() const { return calendar_; }
  const Grid<double>& prices() const { return prices_; }
  const Mask& valid() const { return valid_; }

  double price(std::size_t t, std::size_t i) const { return prices_(t, i); }
  bool is_valid(std::size_t t, std::size_t i) const { return valid_(t, i) != 0; }

  /// First date index [0, end) only.
  PricePanel truncated(std::size_t end) const;
  /// Same panel with every price of asset i multiplied by `factor` (> 0).
  PricePanel scaled(std::size_t asset, double factor) const;

  bool operator==(const PricePanel&) const = default;

 private:
  std::vector<Asset> assets_;
  std::vector<Date> calendar_;
  Grid<double> prices_;
  Mask valid_;
};

enum class ReturnKind { kLog, kSimple };

/// (date x asset) returns over a fixed lookback. A cell is valid only when
/// both endpoint prices are valid.
struct ReturnPanel {
  std::vector<Date> calendar;
  Grid<double> returns;
  Mask valid;
  std::size_t lookback = 1;
  ReturnKind kind = ReturnKind::kLog;
};

/// ln(P_t / P_{t-d}). Throws for d < 1.
ReturnPanel log_returns(const PricePanel& panel, std::size_t d);
/// P_t / P_{t-1} - 1, used for portfolio arithmetic.
ReturnPanel simple_returns(const PricePanel& panel);

enum class Layout { kLong, kPerAsset };

std::optional<Layout> parse_layout(std::string_view name);

/// kLong: one file with header `date,asset,settle`.
/// kPerAsset: `path` is a directory of `<asset>.csv` files with header
/// `date,settle`.
/// The calendar is the union of all dates, assets are sorted by id, and gaps
/// inside an asset's first..last range carry the previous settle forward so
/// each asset keeps one contiguous valid interval.
PricePanel load_panel(const std::filesystem::path& path, Layout layout = Layout::kLong);

/// Writes the canonical long format. Prices use 17 significant digits so a
/// load of the file reproduces the panel exactly.
void save_panel(const PricePanel& panel, const std::filesystem::path& path);

struct RegimeSegment {
  double drift = 0.0;       // per day, log scale
  double volatility = 0.0;  // per day, log scale
  std::size_t length = 0;   // trading days
};

/// Per-asset list of segments, applied in order. The last segment extends to
/// the end of the sample when the list is shorter than the panel.
struct RegimeSpec {
  std::vector<std::vector<RegimeSegment>> assets;
};

inline constexpr std::size_t kTradingDaysPerYear = 252;

/// Geometric random walk on a Monday-Friday calendar starting 1990-01-01,
/// 252 trading days per synthetic year, starting price 100. Deterministic in
/// `seed`. Throws DataError on negative volatility or a spec whose asset count
/// differs from n_assets.
PricePanel synthesize_panel(std::uint64_t seed, std::size_t n_assets, std::size_t years,
                            const RegimeSpec& regimes);

struct TrendOptions {
  double drift_per_day = 6e-4;      // magnitude; sign drawn per segment
  double min_volatility = 0.008;
  double max_volatility = 0.015;
  std::size_t segment_days = 0;     // 0: one persistent segment per asset
};

/// Random planted-trend regimes: each segment gets a random drift sign and a
/// volatility drawn uniformly from [min_volatility, max_volatility].
RegimeSpec planted_trend_regimes(std::uint64_t seed, std::size_t n_assets, std::size_t years,
                                 const TrendOptions& options = {});

/// Monday-Friday dates starting at `start` (moved forward to a weekday).
std::vector<Date> business_days(Date start, std::size_t count);
/// Every Monday-Friday date from first_year-01-01 to last_year-12-31.
std::vector<Date> business_days_between(int first_year, int last_year);

}  // namespace unimom::data
