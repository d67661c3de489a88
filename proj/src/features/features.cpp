#include "unimom/features/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "unimom/error.hpp"

namespace unimom::features {

VolEstimate trailing_vol(const data::ReturnPanel& r, std::size_t window) {
  if (window < 3) throw DataError("trailing_vol: window must be >= 3");
  const std::size_t n_dates = r.returns.rows();
  const std::size_t n_assets = r.returns.cols();
  VolEstimate out{Grid<double>(n_dates, n_assets, 0.0), Mask(n_dates, n_assets, 0), window};
  for (std::size_t i = 0; i < n_assets; ++i) {
    std::size_t run = 0;  // consecutive valid returns ending at t
    for (std::size_t t = 0; t < n_dates; ++t) {
      run = r.valid(t, i) ? run + 1 : 0;
      if (run < window) continue;
      double mean = 0.0;
      for (std::size_t k = t + 1 - window; k <= t; ++k) mean += r.returns(k, i);
      mean /= static_cast<double>(window);
      double ss = 0.0;
      for (std::size_t k = t + 1 - window; k <= t; ++k) {
        const double d = r.returns(k, i) - mean;
        ss += d * d;
      }
      out.sigma(t, i) = std::max(std::sqrt(ss / static_cast<double>(window)), kVolFloor);
      out.valid(t, i) = 1;
    }
  }
  return out;
}

FeaturePanel::FeaturePanel(std::vector<data::Date> calendar, std::vector<data::Asset> assets)
    : calendar_(std::move(calendar)),
      assets_(std::move(assets)),
      values_(calendar_.size() * assets_.size() * kNumFeatures, 0.0),
      valid_(calendar_.size(), assets_.size(), 0) {}

FeaturePanel momentum_features(const data::PricePanel& panel) {
  FeaturePanel out(panel.calendar(), panel.assets());
  const data::ReturnPanel daily = data::log_returns(panel, 1);
  std::array<VolEstimate, kNumFeatures> vols;
  for (std::size_t k = 0; k < kNumFeatures; ++k) vols[k] = trailing_vol(daily, kLookbacks[k]);
  const std::size_t longest = kLookbacks.back();

  for (std::size_t t = longest; t < panel.n_dates(); ++t) {
    for (std::size_t i = 0; i < panel.n_assets(); ++i) {
      if (!panel.is_valid(t, i) || !panel.is_valid(t - longest, i)) continue;
      auto f = out.at(t, i);
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const std::size_t d = kLookbacks[k];
        const double ret = std::log(panel.price(t, i) / panel.price(t - d, i));
        const double scale = vols[k].sigma(t, i) * std::sqrt(static_cast<double>(d));
        f[k] = std::clamp(ret / scale, -kFeatureClip, kFeatureClip);
      }
      out.set_valid(t, i, true);
    }
  }
  return out;
}

void save_features(const FeaturePanel& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date,asset,f3,f5,f10,f21,f63,f126,f252\n";
  char buf[32];
  for (std::size_t t = 0; t < features.n_dates(); ++t) {
    const std::string date = data::format_date(features.calendar()[t]);
    for (std::size_t i = 0; i < features.n_assets(); ++i) {
      if (!features.is_valid(t, i)) continue;
      out << date << ',' << features.assets()[i].id;
      for (double v : features.at(t, i)) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace unimom::features
