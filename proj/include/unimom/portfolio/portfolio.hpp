#pragma once

// Portfolio arithmetic on plain values.
//
// Date convention: weight row t is the position held from the close of t-1
// to the close of t and may only use information up to t-1. It earns the
// simple return P_t / P_{t-1} - 1.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "unimom/data/panel.hpp"
#include "unimom/grid.hpp"

namespace unimom::portfolio {

inline constexpr std::size_t kDaysPerMonth = 21;
inline constexpr double kDefaultCostRate = 3e-4;
inline constexpr double kDefaultVolTarget = 0.15;
inline constexpr std::size_t kVolWindow = 63;
inline constexpr std::size_t kAnnualization = 252;

/// Per-asset signals y in [-1, 1]. Invalid cells are out of the universe.
struct WeightPanel {
  std::string label;
  std::vector<data::Date> calendar;
  Grid<double> weights;
  Mask valid;
};

/// Asset-level holdings: the fraction of capital in each asset.
struct Book {
  std::string label;
  std::vector<data::Date> calendar;
  Grid<double> weights;
  std::vector<unsigned char> active;  // date has at least one position
};

struct StrategyReturns {
  std::string label;
  std::vector<data::Date> calendar;
  std::vector<double> gross;
  std::vector<double> net;
  std::vector<double> turnover;
  std::vector<unsigned char> valid;
  double cost_rate = 0.0;
};

/// Per-date mix over the fast, medium and slow books.
struct AllocationSeries {
  std::vector<data::Date> calendar;
  std::vector<std::array<double, 3>> weights;
};

/// y / n_t, with n_t the number of valid signals on date t.
Book to_book(const WeightPanel& signals);

/// Dates [begin, end) of a book.
Book slice(const Book& book, std::size_t begin, std::size_t end);

/// gross_t = sum_i book(t, i) * r(t, i) over assets with a valid return.
/// `returns` must share the book's calendar. Turnover and net are filled
/// with c = 0; see apply_costs.
StrategyReturns gross_returns(const Book& book, const data::ReturnPanel& simple_returns);

/// (1/n_t) sum_i y_i r_i.
StrategyReturns task_portfolio_return(const WeightPanel& signals,
                                      const data::ReturnPanel& simple_returns);

/// turnover_t = sum_i |b(t,i) - b(t-1,i)| (first date: sum_i |b(t,i)|) and
/// net = gross - c * turnover. Throws DomainError for c < 0 and Error on a
/// calendar mismatch.
StrategyReturns apply_costs(const Book& book, const StrategyReturns& gross, double cost_rate);

/// r_t = sum_k w_k(t) r_k(t). Throws Error on misaligned calendars.
StrategyReturns unified_return(const AllocationSeries& alloc,
                               const std::array<const StrategyReturns*, 3>& tasks);
/// The matching asset-level book sum_k w_k(t) book_k(t).
Book fuse_books(const AllocationSeries& alloc, const std::array<const Book*, 3>& books);

AllocationSeries constant_allocation(const std::vector<data::Date>& calendar,
                                     std::array<double, 3> w);
StrategyReturns eqwt_combine(const std::array<const StrategyReturns*, 3>& tasks);

/// sign * min(target / (daily_vol * sqrt(252)), 1).
double vol_scaled_position(double sign, double daily_vol, double vol_target = kDefaultVolTarget);

/// Moskowitz-style TSMOM over k months (k in 1..12, 21 days each): position
/// sign of the k-month log return (sign(0) = +1), scaled by the trailing
/// 63-day volatility to a 15% annual target with |y| <= 1, lagged one day.
WeightPanel tsmom_weights(const data::PricePanel& panel, std::size_t months,
                          double vol_target = kDefaultVolTarget);

/// Mean of the member TSMOM books. Throws Error for an empty list.
Book combo_book(const data::PricePanel& panel, std::span<const std::size_t> months,
                double vol_target = kDefaultVolTarget);
/// Gross return is the mean of the members' gross returns; costs are charged
/// on the blended book.
StrategyReturns combo_tsmom(const data::PricePanel& panel, std::span<const std::size_t> months,
                            double cost_rate = kDefaultCostRate,
                            double vol_target = kDefaultVolTarget);

struct MvoResult {
  std::array<double, 3> weights{};
  double sharpe = 0.0;
};

/// Long-only max-Sharpe weights by exhaustive search over the simplex grid
/// with step 1/resolution, visited in lexicographic order; the first point
/// within a relative 1e-12 of the best Sharpe wins. A 1e-10 ridge is added
/// to the covariance diagonal.
MvoResult mvo_weights(const std::array<double, 3>& mu,
                      const std::array<std::array<double, 3>, 3>& cov, std::size_t resolution = 100);

double portfolio_sharpe(const std::array<double, 3>& w, const std::array<double, 3>& mu,
                        const std::array<std::array<double, 3>, 3>& cov);

struct MvoOptions {
  std::size_t min_history = 252;
  std::size_t rebalance_every = 21;
  std::size_t resolution = 100;
};

/// Expanding-window MVO over the task return series: equal weights until
/// min_history days are available, then re-optimised every rebalance_every
/// days on returns strictly before the rebalance date.
AllocationSeries mvo_allocations(const std::array<const StrategyReturns*, 3>& tasks,
                                 const MvoOptions& options = {});

}  // namespace unimom::portfolio
