#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>

#include "unimom/data/panel.hpp"
#include "unimom/features/features.hpp"

namespace unimom::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("unimom_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Single-asset panel on consecutive business days from the given prices.
inline data::PricePanel panel_from_prices(const std::vector<std::vector<double>>& columns) {
  const std::size_t n = columns.empty() ? 0 : columns[0].size();
  std::vector<data::Asset> assets;
  Grid<double> prices(n, columns.size());
  Mask valid(n, columns.size(), 1);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    assets.push_back({"A" + std::to_string(i), data::AssetClass::kUnknown});
    for (std::size_t t = 0; t < n; ++t) prices(t, i) = columns[i][t];
  }
  return data::PricePanel(std::move(assets),
                          data::business_days(data::parse_date("2000-01-03"), n),
                          std::move(prices), std::move(valid));
}

/// All-valid feature panel with N(0, 1) entries.
inline features::FeaturePanel random_features(std::size_t n_dates, std::size_t n_assets,
                                              std::uint64_t seed) {
  std::vector<data::Asset> assets;
  for (std::size_t i = 0; i < n_assets; ++i) {
    assets.push_back({"A" + std::to_string(i), data::AssetClass::kUnknown});
  }
  features::FeaturePanel f(data::business_days(data::parse_date("2000-01-03"), n_dates),
                           std::move(assets));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  for (std::size_t t = 0; t < n_dates; ++t) {
    for (std::size_t i = 0; i < n_assets; ++i) {
      for (double& v : f.at(t, i)) v = z(rng);
      f.set_valid(t, i, true);
    }
  }
  return f;
}

}  // namespace unimom::testing
