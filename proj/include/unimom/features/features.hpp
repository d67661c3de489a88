#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "unimom/data/panel.hpp"
#include "unimom/grid.hpp"

namespace unimom::features {

inline constexpr std::size_t kNumFeatures = 7;
inline constexpr std::array<std::size_t, kNumFeatures> kLookbacks{3, 5, 10, 21, 63, 126, 252};
inline constexpr double kFeatureClip = 5.0;
inline constexpr double kVolFloor = 1e-8;

/// Trailing population std of daily log returns, floored at kVolFloor.
struct VolEstimate {
  Grid<double> sigma;
  Mask valid;
  std::size_t window = 0;
};

/// sigma(t) over the `window` returns ending at t. Valid only when all of
/// them are valid. Throws DataError for window < 3.
VolEstimate trailing_vol(const data::ReturnPanel& daily_log_returns, std::size_t window);

/// Volatility-normalised momentum features for every (date, asset), one per
/// lookback in kLookbacks.
class FeaturePanel {
 public:
  FeaturePanel() = default;
  FeaturePanel(std::vector<data::Date> calendar, std::vector<data::Asset> assets);

  std::size_t n_dates() const { return calendar_.size(); }
  std::size_t n_assets() const { return assets_.size(); }
  const std::vector<data::Date>& calendar() const { return calendar_; }
  const std::vector<data::Asset>& assets() const { return assets_; }

  bool is_valid(std::size_t t, std::size_t i) const { return valid_(t, i) != 0; }
  std::span<const double> at(std::size_t t, std::size_t i) const {
    return {values_.data() + (t * n_assets() + i) * kNumFeatures, kNumFeatures};
  }
  std::span<double> at(std::size_t t, std::size_t i) {
    return {values_.data() + (t * n_assets() + i) * kNumFeatures, kNumFeatures};
  }
  void set_valid(std::size_t t, std::size_t i, bool v) { valid_(t, i) = v ? 1 : 0; }

  bool operator==(const FeaturePanel&) const = default;

 private:
  std::vector<data::Date> calendar_;
  std::vector<data::Asset> assets_;
  std::vector<double> values_;
  Mask valid_;
};

/// feature_d(t) = ln(P_t / P_{t-d}) / (sigma_d(t) * sqrt(d)), clipped to
/// [-5, 5], where sigma_d is trailing_vol over the same d days. A cell is
/// valid once 252 prior prices are available.
FeaturePanel momentum_features(const data::PricePanel& panel);

/// Long format `date,asset,f3,f5,f10,f21,f63,f126,f252`, valid cells only.
void save_features(const FeaturePanel& features, const std::filesystem::path& path);

}  // namespace unimom::features
