#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "unimom/diff/tensor.hpp"
#include "unimom/features/features.hpp"

namespace unimom::model {

/// One (date, asset) row of a batch; both are panel indices.
struct RowRef {
  std::size_t date = 0;
  std::size_t asset = 0;
};

/// Network input for a set of dates. Rows are grouped by date; the rows of
/// date d are [offsets[d], offsets[d + 1]).
struct BatchInput {
  std::size_t seq_len = 0;
  std::vector<std::size_t> dates;    // D panel date indices
  std::vector<std::size_t> offsets;  // D + 1
  std::vector<RowRef> rows;          // R
  diff::Tensor sequences;            // [seq_len * R, 7], step-major
  diff::Tensor last_step;            // [R, 7]
  diff::Tensor date_mean;            // [D, 7] cross-sectional mean of last_step

  std::size_t n_dates() const { return dates.size(); }
  std::size_t n_rows() const { return rows.size(); }
};

/// True when the features of asset i are valid on every date t-len+1 .. t.
bool sequence_valid(const features::FeaturePanel& f, std::size_t t, std::size_t i, std::size_t len);

/// Rows for each date in `dates` (ascending) over assets with a valid feature
/// sequence that also pass `include` (when set). Dates left without rows are
/// dropped. Assets within a date are in panel order.
BatchInput assemble_input(const features::FeaturePanel& f, std::span<const std::size_t> dates,
                          std::size_t seq_len,
                          const std::function<bool(std::size_t, std::size_t)>& include = {});

/// Reorder the rows inside every date by `order_for_date(d)`, a permutation
/// of that date's row positions. Used by equivariance tests.
BatchInput permute_rows(const BatchInput& in,
                        const std::function<std::vector<std::size_t>(std::size_t)>& order_for_date);

}  // namespace unimom::model
