#include "unimom/portfolio/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unimom/error.hpp"
#include "unimom/features/features.hpp"

namespace unimom::portfolio {

Book to_book(const WeightPanel& s) {
  const std::size_t T = s.weights.rows();
  const std::size_t N = s.weights.cols();
  Book b{s.label, s.calendar, Grid<double>(T, N, 0.0), std::vector<unsigned char>(T, 0)};
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < N; ++i) n += s.valid(t, i) ? 1 : 0;
    if (n == 0) continue;
    b.active[t] = 1;
    for (std::size_t i = 0; i < N; ++i) {
      if (s.valid(t, i)) b.weights(t, i) = s.weights(t, i) / static_cast<double>(n);
    }
  }
  return b;
}

Book slice(const Book& book, std::size_t begin, std::size_t end) {
  end = std::min(end, book.calendar.size());
  if (begin > end) throw Error("slice: begin after end");
  const std::size_t N = book.weights.cols();
  Book out{book.label,
           {book.calendar.begin() + static_cast<std::ptrdiff_t>(begin),
            book.calendar.begin() + static_cast<std::ptrdiff_t>(end)},
           Grid<double>(end - begin, N, 0.0),
           {book.active.begin() + static_cast<std::ptrdiff_t>(begin),
            book.active.begin() + static_cast<std::ptrdiff_t>(end)}};
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t i = 0; i < N; ++i) out.weights(t - begin, i) = book.weights(t, i);
  }
  return out;
}

StrategyReturns gross_returns(const Book& book, const data::ReturnPanel& r) {
  const std::size_t T = book.calendar.size();
  if (r.calendar != book.calendar || r.returns.cols() != book.weights.cols()) {
    throw Error("gross_returns: book and returns are not aligned");
  }
  StrategyReturns out{book.label, book.calendar, std::vector<double>(T, 0.0),
                      std::vector<double>(T, 0.0), std::vector<double>(T, 0.0), book.active, 0.0};
  for (std::size_t t = 0; t < T; ++t) {
    if (!book.active[t]) continue;
    double g = 0.0;
    for (std::size_t i = 0; i < book.weights.cols(); ++i) {
      if (r.valid(t, i)) g += book.weights(t, i) * r.returns(t, i);
    }
    out.gross[t] = g;
    out.net[t] = g;
  }
  return out;
}

StrategyReturns task_portfolio_return(const WeightPanel& signals, const data::ReturnPanel& r) {
  return gross_returns(to_book(signals), r);
}

StrategyReturns apply_costs(const Book& book, const StrategyReturns& gross, double c) {
  if (!(c >= 0.0)) throw DomainError("cost rate must be non-negative");
  if (book.calendar != gross.calendar) throw Error("apply_costs: calendars differ");
  StrategyReturns out = gross;
  out.cost_rate = c;
  const std::size_t N = book.weights.cols();
  for (std::size_t t = 0; t < book.calendar.size(); ++t) {
    double turn = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double prev = t == 0 ? 0.0 : book.weights(t - 1, i);
      turn += std::abs(book.weights(t, i) - prev);
    }
    out.turnover[t] = turn;
    out.net[t] = gross.gross[t] - c * turn;
  }
  return out;
}

namespace {

void check_aligned(const AllocationSeries& a, const std::vector<data::Date>& cal, const char* op) {
  if (a.calendar != cal || a.weights.size() != cal.size()) {
    throw Error(std::string(op) + ": misaligned calendars");
  }
}

}  // namespace

StrategyReturns unified_return(const AllocationSeries& alloc,
                               const std::array<const StrategyReturns*, 3>& tasks) {
  for (const StrategyReturns* s : tasks) check_aligned(alloc, s->calendar, "unified_return");
  const std::size_t T = alloc.calendar.size();
  StrategyReturns out{"", alloc.calendar, std::vector<double>(T, 0.0), std::vector<double>(T, 0.0),
                      std::vector<double>(T, 0.0), std::vector<unsigned char>(T, 0), 0.0};
  for (std::size_t t = 0; t < T; ++t) {
    double g = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < 3; ++k) {
      g += alloc.weights[t][k] * tasks[k]->gross[t];
      any = any || tasks[k]->valid[t];
    }
    out.gross[t] = g;
    out.net[t] = g;
    out.valid[t] = any ? 1 : 0;
  }
  return out;
}

Book fuse_books(const AllocationSeries& alloc, const std::array<const Book*, 3>& books) {
  for (const Book* b : books) check_aligned(alloc, b->calendar, "fuse_books");
  const std::size_t T = alloc.calendar.size();
  const std::size_t N = books[0]->weights.cols();
  Book out{"", alloc.calendar, Grid<double>(T, N, 0.0), std::vector<unsigned char>(T, 0)};
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double w = alloc.weights[t][k];
      for (std::size_t i = 0; i < N; ++i) out.weights(t, i) += w * books[k]->weights(t, i);
      out.active[t] |= books[k]->active[t];
    }
  }
  return out;
}

AllocationSeries constant_allocation(const std::vector<data::Date>& calendar,
                                     std::array<double, 3> w) {
  return {calendar, std::vector<std::array<double, 3>>(calendar.size(), w)};
}

StrategyReturns eqwt_combine(const std::array<const StrategyReturns*, 3>& tasks) {
  const double third = 1.0 / 3.0;
  return unified_return(constant_allocation(tasks[0]->calendar, {third, third, third}), tasks);
}

double vol_scaled_position(double sign, double daily_vol, double vol_target) {
  const double annual = daily_vol * std::sqrt(static_cast<double>(kAnnualization));
  return sign * std::min(vol_target / annual, 1.0);
}

WeightPanel tsmom_weights(const data::PricePanel& panel, std::size_t months, double vol_target) {
  if (months < 1 || months > 12) throw Error("tsmom_weights: months must be in 1..12");
  const std::size_t lookback = months * kDaysPerMonth;
  const std::size_t T = panel.n_dates();
  const std::size_t N = panel.n_assets();
  const data::ReturnPanel daily = data::log_returns(panel, 1);
  const features::VolEstimate vol = features::trailing_vol(daily, kVolWindow);
  WeightPanel out{"TSMOM(" + std::to_string(months) + ")", panel.calendar(), Grid<double>(T, N, 0.0),
                  Mask(T, N, 0)};
  for (std::size_t t = 1; t < T; ++t) {
    const std::size_t s = t - 1;  // decision date
    if (s < lookback) continue;
    for (std::size_t i = 0; i < N; ++i) {
      if (!panel.is_valid(s, i) || !panel.is_valid(s - lookback, i) || !vol.valid(s, i)) continue;
      const double ret = std::log(panel.price(s, i) / panel.price(s - lookback, i));
      const double sign = ret >= 0.0 ? 1.0 : -1.0;
      out.weights(t, i) = vol_scaled_position(sign, vol.sigma(s, i), vol_target);
      out.valid(t, i) = 1;
    }
  }
  return out;
}

Book combo_book(const data::PricePanel& panel, std::span<const std::size_t> months,
                double vol_target) {
  if (months.empty()) throw Error("combo_tsmom: empty member list");
  Book out;
  const double m = static_cast<double>(months.size());
  for (std::size_t k = 0; k < months.size(); ++k) {
    const Book b = to_book(tsmom_weights(panel, months[k], vol_target));
    if (k == 0) {
      out = b;
      out.weights = Grid<double>(b.weights.rows(), b.weights.cols(), 0.0);
    }
    for (std::size_t j = 0; j < b.weights.data().size(); ++j) out.weights.data()[j] += b.weights.data()[j] / m;
    for (std::size_t t = 0; t < b.active.size(); ++t) out.active[t] |= b.active[t];
  }
  out.label = "TSMOM(" + std::to_string(months.front()) +
              (months.size() > 1 ? "," + std::to_string(months.back()) : "") + ")";
  return out;
}

StrategyReturns combo_tsmom(const data::PricePanel& panel, std::span<const std::size_t> months,
                            double cost_rate, double vol_target) {
  const Book book = combo_book(panel, months, vol_target);
  return apply_costs(book, gross_returns(book, data::simple_returns(panel)), cost_rate);
}

double portfolio_sharpe(const std::array<double, 3>& w, const std::array<double, 3>& mu,
                        const std::array<std::array<double, 3>, 3>& cov) {
  double ret = 0.0;
  double var = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    ret += w[a] * mu[a];
    for (std::size_t b = 0; b < 3; ++b) var += w[a] * cov[a][b] * w[b];
  }
  return var > 0.0 ? ret / std::sqrt(var) : (ret == 0.0 ? 0.0 : std::copysign(INFINITY, ret));
}

MvoResult mvo_weights(const std::array<double, 3>& mu,
                      const std::array<std::array<double, 3>, 3>& cov, std::size_t resolution) {
  if (resolution == 0) throw Error("mvo_weights: resolution must be positive");
  auto ridged = cov;
  for (std::size_t a = 0; a < 3; ++a) ridged[a][a] += 1e-10;
  const double step = 1.0 / static_cast<double>(resolution);
  MvoResult best{{0.0, 0.0, 0.0}, -std::numeric_limits<double>::infinity()};
  for (std::size_t a = 0; a <= resolution; ++a) {
    for (std::size_t b = 0; a + b <= resolution; ++b) {
      const std::size_t c = resolution - a - b;
      const std::array<double, 3> w{a * step, b * step, c * step};
      const double s = portfolio_sharpe(w, mu, ridged);
      const bool first = a == 0 && b == 0;
      if (first || s > best.sharpe + 1e-12 * std::max(1.0, std::abs(best.sharpe))) best = {w, s};
    }
  }
  return best;
}

AllocationSeries mvo_allocations(const std::array<const StrategyReturns*, 3>& tasks,
                                 const MvoOptions& o) {
  const std::size_t T = tasks[0]->calendar.size();
  for (const StrategyReturns* s : tasks) {
    if (s->calendar != tasks[0]->calendar) throw Error("mvo_combine: misaligned calendars");
  }
  if (o.rebalance_every == 0) throw Error("mvo_combine: rebalance interval must be positive");
  const double third = 1.0 / 3.0;
  AllocationSeries out = constant_allocation(tasks[0]->calendar, {third, third, third});
  std::array<double, 3> current{third, third, third};
  for (std::size_t t = 0; t < T; ++t) {
    if (t >= o.min_history && (t - o.min_history) % o.rebalance_every == 0) {
      std::array<double, 3> mu{};
      for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t s = 0; s < t; ++s) mu[k] += tasks[k]->gross[s];
        mu[k] /= static_cast<double>(t);
      }
      std::array<std::array<double, 3>, 3> cov{};
      for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = a; b < 3; ++b) {
          double acc = 0.0;
          for (std::size_t s = 0; s < t; ++s) {
            acc += (tasks[a]->gross[s] - mu[a]) * (tasks[b]->gross[s] - mu[b]);
          }
          cov[a][b] = cov[b][a] = acc / static_cast<double>(t);
        }
      }
      current = mvo_weights(mu, cov, o.resolution).weights;
    }
    out.weights[t] = current;
  }
  return out;
}

}  // namespace unimom::portfolio
