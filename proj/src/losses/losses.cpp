#include "unimom/losses/losses.hpp"

#include <algorithm>
#include <cmath>

#include "unimom/diff/ops.hpp"
#include "unimom/error.hpp"

namespace unimom::losses {

using diff::Shape;
using diff::Tensor;
using diff::Var;

std::optional<SharpeTerm> parse_sharpe_term(std::string_view name) {
  if (name == "softcap") return SharpeTerm::kSoftCap;
  if (name == "sharpe") return SharpeTerm::kSharpe;
  if (name == "softcap-symmetric") return SharpeTerm::kSoftCapSymmetric;
  return std::nullopt;
}

std::string_view to_string(SharpeTerm term) {
  switch (term) {
    case SharpeTerm::kSoftCap: return "softcap";
    case SharpeTerm::kSharpe: return "sharpe";
    case SharpeTerm::kSoftCapSymmetric: return "softcap-symmetric";
  }
  return "?";
}

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) throw DomainError("soft cap threshold must be positive");
}

// Lower kink of the capped map: SR - tau as printed, SR + tau when symmetric.
double lower_shift(double tau, SharpeTerm term) {
  return term == SharpeTerm::kSoftCapSymmetric ? tau : -tau;
}

}  // namespace

double soft_cap(double sr, double tau, SharpeTerm term) {
  if (term == SharpeTerm::kSharpe) return -sr;
  check_tau(tau);
  const double u = std::min(sr, tau);
  const double u_excess = std::max(sr - tau, 0.0);
  const double l = std::max(u, -tau);
  const double l_excess = std::min(sr + lower_shift(tau, term), 0.0);
  return -(l + std::log1p(u_excess) - std::log1p(-l_excess));
}

double soft_cap_derivative(double sr, double tau, SharpeTerm term) {
  if (term == SharpeTerm::kSharpe) return -1.0;
  check_tau(tau);
  // At a kink the outer piece supplies the value, so its slope is used.
  if (sr >= tau) return -1.0 / (1.0 + sr - tau);
  const double dl = sr > -tau ? 1.0 : 0.0;
  const double shifted = sr + lower_shift(tau, term);
  const double dlog = shifted <= 0.0 ? 1.0 / (1.0 - shifted) : 0.0;
  return -(dl + dlog);
}

Var rmse_loss(const Var& pred, const Var& target, std::span<const std::size_t> offsets) {
  if (offsets.size() < 2 || offsets.back() == 0) throw Error("rmse_loss: no valid pairs");
  const Var err = diff::square(diff::sub(pred, target));
  return diff::mean(diff::sqrt(diff::segment_mean(err, offsets)));
}

Var sharpe_ratio(const Var& returns) {
  if (returns.value().size() < 2) throw Error("Sharpe loss needs at least two returns");
  return diff::div(diff::mean(returns), diff::std_dev(returns, kSharpeStdFloor));
}

Var sharpe_loss(const Var& returns) { return diff::neg(sharpe_ratio(returns)); }

Var soft_capped_sharpe(const Var& returns, double tau, SharpeTerm term) {
  if (term != SharpeTerm::kSharpe) check_tau(tau);
  return diff::map(
      sharpe_ratio(returns), [tau, term](double sr) { return soft_cap(sr, tau, term); },
      [tau, term](double sr) { return soft_cap_derivative(sr, tau, term); });
}

LossInputs gather_loss_inputs(const model::BatchInput& batch, const targets::TargetPanel& tp,
                              const data::ReturnPanel& simple) {
  const std::size_t R = batch.n_rows();
  LossInputs out;
  for (auto& t : out.targets) t = Tensor(Shape{R, 1});
  out.next_returns = Tensor(Shape{R, 1});
  for (std::size_t r = 0; r < R; ++r) {
    const auto [t, i] = batch.rows[r];
    for (std::size_t k = 0; k < model::kNumTasks; ++k) {
      const auto& slice = tp.slices[k];
      if (!slice.valid(t, i)) {
        throw DataError("missing target for row " + std::to_string(r) + " (horizon " +
                        std::to_string(slice.horizon) + ")");
      }
      out.targets[k][r] = slice.values(t, i);
    }
    if (t + 1 >= simple.returns.rows() || !simple.valid(t + 1, i)) {
      throw DataError("missing next-day return for row " + std::to_string(r));
    }
    out.next_returns[r] = simple.returns(t + 1, i);
  }
  return out;
}

Var task_return(const Var& scores, const Var& next_returns, std::span<const std::size_t> offsets) {
  return diff::segment_mean(diff::mul(scores, next_returns), offsets);
}

Var unified_return(const Var& allocation, const std::array<Var, model::kNumTasks>& task_returns) {
  return diff::row_sum(diff::mul(diff::concat(task_returns), allocation));
}

LossBreakdown total_loss(diff::Tape& tape, const model::MmoeModel& model,
                         std::span<const Var> params, const model::BatchInput& batch,
                         const LossInputs& inputs, const LossOptions& options,
                         const std::array<Tensor, model::kNumTasks>* frozen) {
  const model::ForwardResult fwd = model::forward(tape, model, params, batch, frozen);
  const Var next = tape.constant(inputs.next_returns);
  LossBreakdown out;
  for (std::size_t k = 0; k < model::kNumTasks; ++k) {
    out.task_returns[k] = task_return(fwd.scores[k], next, batch.offsets);
  }
  out.unified_returns = unified_return(fwd.allocation, out.task_returns);
  out.sharpe_ratio = sharpe_ratio(out.unified_returns);
  out.sharpe_term = options.term == SharpeTerm::kSharpe
                        ? diff::neg(out.sharpe_ratio)
                        : diff::map(
                              out.sharpe_ratio,
                              [o = options](double sr) { return soft_cap(sr, o.tau, o.term); },
                              [o = options](double sr) { return soft_cap_derivative(sr, o.tau, o.term); });
  Var total = out.sharpe_term;
  for (std::size_t k = 0; k < model::kNumTasks; ++k) {
    out.rmse[k] = rmse_loss(fwd.scores[k], tape.constant(inputs.targets[k]), batch.offsets);
    total = diff::add(total, out.rmse[k]);
  }
  out.total = total;
  return out;
}

}  // namespace unimom::losses
