#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "unimom/diff/adam.hpp"
#include "unimom/diff/tape.hpp"

namespace unimom::diff {

/// Builds a scalar loss on `tape` from leaves bound to the parameters, in order.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckReport {
  /// max over checked coordinates of |analytic - numeric| / max(1, |numeric|)
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Compare reverse-mode gradients against central differences with step h.
/// When `max_coords_per_param` is nonzero only that many evenly spaced
/// coordinates of each parameter are perturbed. Parameters are restored on
/// return. Throws DomainError if the loss evaluates to NaN.
GradCheckReport finite_diff_check(const LossBuilder& loss, std::span<Parameter> params,
                                  double h = 1e-5, std::size_t max_coords_per_param = 0);

}  // namespace unimom::diff
