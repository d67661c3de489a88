#pragma once

#include <cstdint>

#include "unimom/diff/gradcheck.hpp"
#include "unimom/losses/losses.hpp"

namespace unimom::cli {

struct ToyGradcheckOptions {
  std::uint64_t seed = 1;
  std::size_t n_experts = 2;
  std::size_t lstm_hidden = 8;
  std::size_t n_assets = 4;
  std::size_t sequence_length = 10;
  std::size_t batch_window = 30;
  /// 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  double step = 1e-5;
  losses::LossOptions loss;
};

/// Central-difference check of the total training loss of a toy model on one
/// window of a synthetic planted-trend panel.
diff::GradCheckReport toy_gradcheck(const ToyGradcheckOptions& options = {});

}  // namespace unimom::cli
