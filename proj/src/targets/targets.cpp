#include "unimom/targets/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "unimom/error.hpp"

namespace unimom::targets {

TargetSlice forward_tsmom(const data::PricePanel& panel, std::size_t s) {
  if (std::find(kHorizons.begin(), kHorizons.end(), s) == kHorizons.end()) {
    throw DataError("forward_tsmom: horizon " + std::to_string(s) + " not in {20, 60, 120}");
  }
  const std::size_t n = panel.n_dates();
  TargetSlice out{s, Grid<double>(n, panel.n_assets(), 0.0), Mask(n, panel.n_assets(), 0)};
  std::vector<double> window(s);
  for (std::size_t i = 0; i < panel.n_assets(); ++i) {
    for (std::size_t t = 0; t + s < n; ++t) {
      bool ok = true;
      for (std::size_t k = t; k <= t + s && ok; ++k) ok = panel.is_valid(k, i);
      if (!ok) continue;
      double mean = 0.0;
      for (std::size_t k = 0; k < s; ++k) {
        window[k] = std::log(panel.price(t + k + 1, i) / panel.price(t + k, i));
        mean += window[k];
      }
      mean /= static_cast<double>(s);
      double ss = 0.0;
      for (double v : window) ss += (v - mean) * (v - mean);
      const double sigma = std::max(std::sqrt(ss / static_cast<double>(s)), kTargetVolFloor);
      const double fwd = std::log(panel.price(t + s, i) / panel.price(t, i));
      out.values(t, i) = std::clamp(fwd / sigma, -kTargetClip, kTargetClip);
      out.valid(t, i) = 1;
    }
  }
  return out;
}

TargetPanel all_targets(const data::PricePanel& panel) {
  TargetPanel out;
  out.calendar = panel.calendar();
  for (std::size_t k = 0; k < kHorizons.size(); ++k) out.slices[k] = forward_tsmom(panel, kHorizons[k]);
  return out;
}

void save_targets(const TargetSlice& slice, const data::PricePanel& panel,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date,asset,target\n";
  char buf[32];
  for (std::size_t t = 0; t < slice.values.rows(); ++t) {
    for (std::size_t i = 0; i < slice.values.cols(); ++i) {
      if (!slice.valid(t, i)) continue;
      std::snprintf(buf, sizeof buf, "%.17g", slice.values(t, i));
      out << data::format_date(panel.calendar()[t]) << ',' << panel.assets()[i].id << ',' << buf
          << '\n';
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace unimom::targets
