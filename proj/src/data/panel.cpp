#include "unimom/data/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "unimom/error.hpp"

namespace unimom::data {
namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_price(std::string_view text, const std::string& where) {
  const std::string owned(trim(text));
  char* end = nullptr;
  const double v = std::strtod(owned.c_str(), &end);
  if (owned.empty() || end != owned.c_str() + owned.size() || !std::isfinite(v)) {
    throw DataError(where + ": unparseable settle '" + owned + "'");
  }
  if (!(v > 0.0)) throw DataError(where + ": non-positive settle " + owned);
  return v;
}

using SeriesMap = std::map<std::string, std::map<Date, double>>;

void insert(SeriesMap& series, const std::string& asset, Date d, double price,
            const std::string& where) {
  auto [it, inserted] = series[asset].emplace(d, price);
  if (!inserted) {
    throw DataError(where + ": duplicate entry for " + asset + " on " + format_date(d));
  }
}

PricePanel assemble(const SeriesMap& series) {
  std::set<Date> dates;
  for (const auto& [asset, s] : series) {
    for (const auto& [d, p] : s) dates.insert(d);
  }
  std::vector<Date> calendar(dates.begin(), dates.end());
  std::vector<Asset> assets;
  for (const auto& [asset, s] : series) assets.push_back({asset, AssetClass::kUnknown});

  Grid<double> prices(calendar.size(), assets.size(), 0.0);
  Mask valid(calendar.size(), assets.size(), 0);
  std::size_t col = 0;
  for (const auto& [asset, s] : series) {
    if (s.empty()) continue;
    const auto first = std::lower_bound(calendar.begin(), calendar.end(), s.begin()->first);
    const auto last = std::lower_bound(calendar.begin(), calendar.end(), s.rbegin()->first);
    double carry = s.begin()->second;
    for (auto it = first; it <= last; ++it) {
      const auto found = s.find(*it);
      if (found != s.end()) carry = found->second;
      const std::size_t t = static_cast<std::size_t>(it - calendar.begin());
      prices(t, col) = carry;
      valid(t, col) = 1;
    }
    ++col;
  }
  return PricePanel(std::move(assets), std::move(calendar), std::move(prices), std::move(valid));
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void expect_header(std::string_view got, std::string_view want, const fs::path& path) {
  if (trim(got) != want) {
    throw DataError(path.string() + ": expected header '" + std::string(want) + "', got '" +
                    std::string(trim(got)) + "'");
  }
}

}  // namespace

Date parse_date(std::string_view text) {
  text = trim(text);
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [&](std::string_view part, auto& out) {
    const auto res = std::from_chars(part.data(), part.data() + part.size(), out);
    return res.ec == std::errc() && res.ptr == part.data() + part.size();
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse(text.substr(0, 4), y) ||
      !parse(text.substr(5, 2), m) || !parse(text.substr(8, 2), d)) {
    throw DataError("unparseable date '" + std::string(text) + "'");
  }
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return sys_days{ymd};
}

std::string format_date(Date d) {
  const year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int year_of(Date d) { return static_cast<int>(year_month_day{d}.year()); }

std::string_view to_string(AssetClass c) {
  switch (c) {
    case AssetClass::kCommodity: return "commodity";
    case AssetClass::kCurrency: return "currency";
    case AssetClass::kFixedIncome: return "fixed-income";
    case AssetClass::kEquityIndex: return "equity-index";
    case AssetClass::kUnknown: break;
  }
  return "unknown";
}

PricePanel::PricePanel(std::vector<Asset> assets, std::vector<Date> calendar, Grid<double> prices,
                       Mask valid)
    : assets_(std::move(assets)),
      calendar_(std::move(calendar)),
      prices_(std::move(prices)),
      valid_(std::move(valid)) {
  for (std::size_t t = 1; t < calendar_.size(); ++t) {
    if (!(calendar_[t - 1] < calendar_[t])) {
      throw DataError("calendar not strictly increasing at " + format_date(calendar_[t]));
    }
  }
  if (prices_.rows() != calendar_.size() || prices_.cols() != assets_.size() ||
      valid_.rows() != calendar_.size() || valid_.cols() != assets_.size()) {
    throw DataError("price grid does not match calendar x assets");
  }
  for (std::size_t i = 0; i < assets_.size(); ++i) {
    int transitions = 0;
    bool prev = false;
    for (std::size_t t = 0; t < calendar_.size(); ++t) {
      const bool v = valid_(t, i) != 0;
      if (v && !(prices_(t, i) > 0.0)) {
        throw DataError("non-positive price for " + assets_[i].id + " on " +
                        format_date(calendar_[t]));
      }
      if (v != prev) ++transitions;
      prev = v;
    }
    if (transitions > 2) {
      throw DataError("asset " + assets_[i].id + " has a non-contiguous valid range");
    }
  }
}

PricePanel PricePanel::truncated(std::size_t end) const {
  end = std::min(end, n_dates());
  std::vector<Date> cal(calendar_.begin(), calendar_.begin() + static_cast<std::ptrdiff_t>(end));
  Grid<double> p(end, n_assets());
  Mask v(end, n_assets());
  for (std::size_t t = 0; t < end; ++t) {
    for (std::size_t i = 0; i < n_assets(); ++i) {
      p(t, i) = prices_(t, i);
      v(t, i) = valid_(t, i);
    }
  }
  return PricePanel(assets_, std::move(cal), std::move(p), std::move(v));
}

PricePanel PricePanel::scaled(std::size_t asset, double factor) const {
  if (!(factor > 0.0)) throw DataError("scale factor must be positive");
  Grid<double> p = prices_;
  for (std::size_t t = 0; t < n_dates(); ++t) p(t, asset) *= factor;
  return PricePanel(assets_, calendar_, std::move(p), valid_);
}

ReturnPanel log_returns(const PricePanel& panel, std::size_t d) {
  if (d < 1) throw DataError("log_returns: lookback must be >= 1");
  ReturnPanel out;
  out.calendar = panel.calendar();
  out.returns = Grid<double>(panel.n_dates(), panel.n_assets(), 0.0);
  out.valid = Mask(panel.n_dates(), panel.n_assets(), 0);
  out.lookback = d;
  out.kind = ReturnKind::kLog;
  for (std::size_t t = d; t < panel.n_dates(); ++t) {
    for (std::size_t i = 0; i < panel.n_assets(); ++i) {
      if (panel.is_valid(t, i) && panel.is_valid(t - d, i)) {
        out.returns(t, i) = std::log(panel.price(t, i) / panel.price(t - d, i));
        out.valid(t, i) = 1;
      }
    }
  }
  return out;
}

ReturnPanel simple_returns(const PricePanel& panel) {
  ReturnPanel out;
  out.calendar = panel.calendar();
  out.returns = Grid<double>(panel.n_dates(), panel.n_assets(), 0.0);
  out.valid = Mask(panel.n_dates(), panel.n_assets(), 0);
  out.lookback = 1;
  out.kind = ReturnKind::kSimple;
  for (std::size_t t = 1; t < panel.n_dates(); ++t) {
    for (std::size_t i = 0; i < panel.n_assets(); ++i) {
      if (panel.is_valid(t, i) && panel.is_valid(t - 1, i)) {
        out.returns(t, i) = panel.price(t, i) / panel.price(t - 1, i) - 1.0;
        out.valid(t, i) = 1;
      }
    }
  }
  return out;
}

std::optional<Layout> parse_layout(std::string_view name) {
  if (name == "long") return Layout::kLong;
  if (name == "per-asset") return Layout::kPerAsset;
  return std::nullopt;
}

PricePanel load_panel(const fs::path& path, Layout layout) {
  SeriesMap series;
  if (layout == Layout::kLong) {
    std::ifstream in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    expect_header(line, "date,asset,settle", path);
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (trim(line).empty()) continue;
      const std::string where = path.string() + " row " + std::to_string(row);
      const auto fields = split(line, ',');
      if (fields.size() != 3) throw DataError(where + ": expected 3 fields");
      Date d;
      try {
        d = parse_date(fields[0]);
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
      const std::string asset(trim(fields[1]));
      if (asset.empty()) throw DataError(where + ": empty asset id");
      insert(series, asset, d, parse_price(fields[2], where), where);
    }
  } else {
    if (!fs::is_directory(path)) throw DataError(path.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError(path.string() + ": no .csv files");
    for (const fs::path& file : files) {
      const std::string asset = file.stem().string();
      std::ifstream in = open_input(file);
      std::string line;
      if (!std::getline(in, line)) throw DataError(file.string() + ": empty file");
      expect_header(line, "date,settle", file);
      std::size_t row = 1;
      series[asset];
      while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const std::string where = file.string() + " row " + std::to_string(row);
        const auto fields = split(line, ',');
        if (fields.size() != 2) throw DataError(where + ": expected 2 fields");
        Date d;
        try {
          d = parse_date(fields[0]);
        } catch (const DataError& e) {
          throw DataError(where + ": " + e.what());
        }
        insert(series, asset, d, parse_price(fields[1], where), where);
      }
    }
  }
  if (series.empty()) throw DataError(path.string() + ": no price rows");
  return assemble(series);
}

void save_panel(const PricePanel& panel, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "date,asset,settle\n";
  char buf[64];
  for (std::size_t t = 0; t < panel.n_dates(); ++t) {
    const std::string date = format_date(panel.calendar()[t]);
    for (std::size_t i = 0; i < panel.n_assets(); ++i) {
      if (!panel.is_valid(t, i)) continue;
      std::snprintf(buf, sizeof buf, "%.17g", panel.price(t, i));
      out << date << ',' << panel.assets()[i].id << ',' << buf << '\n';
    }
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<Date> business_days(Date start, std::size_t count) {
  std::vector<Date> out;
  out.reserve(count);
  Date d = start;
  while (out.size() < count) {
    const weekday wd{d};
    if (wd != Saturday && wd != Sunday) out.push_back(d);
    d += days{1};
  }
  return out;
}

std::vector<Date> business_days_between(int first_year, int last_year) {
  std::vector<Date> out;
  const Date end = sys_days{year{last_year} / December / 31};
  for (Date d = sys_days{year{first_year} / January / 1}; d <= end; d += days{1}) {
    const weekday wd{d};
    if (wd != Saturday && wd != Sunday) out.push_back(d);
  }
  return out;
}

PricePanel synthesize_panel(std::uint64_t seed, std::size_t n_assets, std::size_t years,
                            const RegimeSpec& regimes) {
  if (regimes.assets.size() != n_assets) {
    throw DataError("regime spec lists " + std::to_string(regimes.assets.size()) +
                    " assets, expected " + std::to_string(n_assets));
  }
  const std::size_t n_days = years * kTradingDaysPerYear;
  std::vector<Asset> assets;
  constexpr AssetClass kClasses[] = {AssetClass::kCommodity, AssetClass::kCurrency,
                                     AssetClass::kFixedIncome, AssetClass::kEquityIndex};
  for (std::size_t i = 0; i < n_assets; ++i) {
    if (regimes.assets[i].empty()) throw DataError("asset " + std::to_string(i) + " has no regime");
    for (const RegimeSegment& s : regimes.assets[i]) {
      if (s.volatility < 0.0 || !std::isfinite(s.volatility) || !std::isfinite(s.drift)) {
        throw DataError("regime volatility must be finite and non-negative");
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "SYN%03zu", i);
    assets.push_back({id, kClasses[i % 4]});
  }

  Grid<double> prices(n_days, n_assets, 0.0);
  Mask valid(n_days, n_assets, n_days > 0 ? 1 : 0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> price(n_assets, 100.0);
  std::vector<std::size_t> seg(n_assets, 0), used(n_assets, 0);
  for (std::size_t t = 0; t < n_days; ++t) {
    for (std::size_t i = 0; i < n_assets; ++i) {
      const auto& segs = regimes.assets[i];
      while (seg[i] + 1 < segs.size() && used[i] >= segs[seg[i]].length) {
        ++seg[i];
        used[i] = 0;
      }
      const double z = normal(rng);
      if (t > 0) {
        const RegimeSegment& s = segs[seg[i]];
        price[i] *= std::exp(s.drift + s.volatility * z);
        ++used[i];
      }
      prices(t, i) = price[i];
    }
  }
  return PricePanel(std::move(assets), business_days(sys_days{year{1990} / January / 1}, n_days),
                    std::move(prices), std::move(valid));
}

RegimeSpec planted_trend_regimes(std::uint64_t seed, std::size_t n_assets, std::size_t years,
                                 const TrendOptions& options) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> vol(options.min_volatility, options.max_volatility);
  std::bernoulli_distribution coin(0.5);
  const std::size_t n_days = years * kTradingDaysPerYear;
  RegimeSpec spec;
  for (std::size_t i = 0; i < n_assets; ++i) {
    std::vector<RegimeSegment> segs;
    const std::size_t len = options.segment_days == 0 ? n_days : options.segment_days;
    for (std::size_t used = 0; used < std::max<std::size_t>(n_days, 1); used += len) {
      const double sign = coin(rng) ? 1.0 : -1.0;
      segs.push_back({sign * options.drift_per_day, vol(rng), len});
      if (options.segment_days == 0) break;
    }
    spec.assets.push_back(std::move(segs));
  }
  return spec;
}

}  // namespace unimom::data
