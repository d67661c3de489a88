#pragma once

// Training objectives. Everything is built on a diff::Tape so the total loss
// can be differentiated end to end.

#include <array>
#include <optional>
#include <span>
#include <string_view>

#include "unimom/data/panel.hpp"
#include "unimom/diff/tape.hpp"
#include "unimom/model/mmoe.hpp"
#include "unimom/targets/targets.hpp"

namespace unimom::losses {

inline constexpr double kDefaultTau = 0.01;
inline constexpr double kSharpeStdFloor = 1e-8;

/// Risk-adjusted term of the total loss.
///  kSoftCap: the capped Sharpe exactly as specified, lower kink at SR = tau.
///  kSharpe: plain -SR (ablation).
///  kSoftCapSymmetric: capped Sharpe with the lower kink moved to SR = -tau,
///    linear with slope -1 on [-tau, tau].
enum class SharpeTerm { kSoftCap, kSharpe, kSoftCapSymmetric };

std::optional<SharpeTerm> parse_sharpe_term(std::string_view name);
std::string_view to_string(SharpeTerm term);

/// Scalar soft-cap map and its derivative in SR. At the kinks the derivative
/// of the branch selected by the min/max (ties go to the middle branch) is
/// returned. Throws DomainError for tau <= 0.
double soft_cap(double sr, double tau, SharpeTerm term = SharpeTerm::kSoftCap);
double soft_cap_derivative(double sr, double tau, SharpeTerm term = SharpeTerm::kSoftCap);

/// Mean over dates of the per-date root-mean-square error. pred and target
/// are [R, 1] with rows grouped by `offsets`. Throws Error for an empty batch.
diff::Var rmse_loss(const diff::Var& pred, const diff::Var& target,
                    std::span<const std::size_t> offsets);

/// mean / population std (floored at 1e-8) of a return vector.
diff::Var sharpe_ratio(const diff::Var& returns);
/// -sharpe_ratio. Throws Error for fewer than two returns.
diff::Var sharpe_loss(const diff::Var& returns);
/// soft_cap applied to sharpe_ratio. Throws Error for fewer than two returns.
diff::Var soft_capped_sharpe(const diff::Var& returns, double tau = kDefaultTau,
                             SharpeTerm term = SharpeTerm::kSoftCap);

/// Per-row supervision for one batch: the three task targets and the next
/// day's simple return of each row's asset.
struct LossInputs {
  std::array<diff::Tensor, model::kNumTasks> targets;  // [R, 1]
  diff::Tensor next_returns;                           // [R, 1]
};

/// Reads targets and next-day returns for every batch row. Throws DataError
/// if any of them is masked.
LossInputs gather_loss_inputs(const model::BatchInput& batch, const targets::TargetPanel& targets,
                              const data::ReturnPanel& simple_returns);

struct LossOptions {
  double tau = kDefaultTau;
  SharpeTerm term = SharpeTerm::kSoftCap;
};

struct LossBreakdown {
  diff::Var total;
  diff::Var sharpe_term;
  std::array<diff::Var, model::kNumTasks> rmse;
  std::array<diff::Var, model::kNumTasks> task_returns;  // [D, 1]
  diff::Var unified_returns;                              // [D, 1]
  diff::Var sharpe_ratio;
};

/// Per-date task return (1/n) sum_i y_i r_i from [R, 1] scores and returns.
diff::Var task_return(const diff::Var& scores, const diff::Var& next_returns,
                      std::span<const std::size_t> offsets);
/// sum_k w[:, k] * r_k for [D, 3] allocations and three [D, 1] task returns.
diff::Var unified_return(const diff::Var& allocation,
                         const std::array<diff::Var, model::kNumTasks>& task_returns);

/// Sharpe term of the unified return plus the three task RMSEs.
LossBreakdown total_loss(diff::Tape& tape, const model::MmoeModel& model,
                         std::span<const diff::Var> params, const model::BatchInput& batch,
                         const LossInputs& inputs, const LossOptions& options = {},
                         const std::array<diff::Tensor, model::kNumTasks>* frozen_scores = nullptr);

}  // namespace unimom::losses
