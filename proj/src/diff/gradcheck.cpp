#include "unimom/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "unimom/error.hpp"

namespace unimom::diff {
namespace {

double evaluate(const LossBuilder& loss, std::span<const Parameter> params) {
  Tape tape(false);
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Parameter& p : params) leaves.push_back(tape.constant(p.value));
  const double v = loss(tape, leaves).value().item();
  if (std::isnan(v)) throw DomainError("finite_diff_check: loss evaluated to NaN");
  return v;
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& loss, std::span<Parameter> params, double h,
                                  std::size_t max_coords_per_param) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Parameter& p : params) leaves.push_back(tape.variable(p.value));
    const Var out = loss(tape, leaves);
    if (std::isnan(out.value().item())) {
      throw DomainError("finite_diff_check: loss evaluated to NaN");
    }
    const GradientMap grads = tape.backward(out);
    for (const Var& leaf : leaves) analytic.push_back(grads[leaf]);
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p].value;
    const std::size_t n = value.size();
    const std::size_t count = max_coords_per_param == 0 ? n : std::min(n, max_coords_per_param);
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = count == n ? c : (c * n) / count;
      const double saved = value[i];
      value[i] = saved + h;
      const double up = evaluate(loss, params);
      value[i] = saved - h;
      const double down = evaluate(loss, params);
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::fabs(analytic[p][i] - numeric) / std::max(1.0, std::fabs(numeric));
      ++report.coordinates_checked;
      if (err > report.max_rel_error || report.worst_parameter.empty()) {
        if (err >= report.max_rel_error) {
          report.max_rel_error = err;
          report.worst_parameter = params[p].name;
          report.worst_index = i;
        }
      }
    }
  }
  return report;
}

}  // namespace unimom::diff
