#include "unimom/model/input.hpp"

#include <algorithm>

#include "unimom/error.hpp"

namespace unimom::model {

using features::kNumFeatures;

bool sequence_valid(const features::FeaturePanel& f, std::size_t t, std::size_t i,
                    std::size_t len) {
  if (len == 0 || t + 1 < len || t >= f.n_dates()) return false;
  for (std::size_t k = t + 1 - len; k <= t; ++k) {
    if (!f.is_valid(k, i)) return false;
  }
  return true;
}

namespace {

BatchInput fill(const features::FeaturePanel& f, std::vector<std::size_t> dates,
                std::vector<std::size_t> offsets, std::vector<RowRef> rows, std::size_t seq_len) {
  BatchInput b;
  b.seq_len = seq_len;
  const std::size_t R = rows.size();
  const std::size_t D = dates.size();
  b.sequences = diff::Tensor(diff::Shape{seq_len * R, kNumFeatures});
  b.last_step = diff::Tensor(diff::Shape{R, kNumFeatures});
  b.date_mean = diff::Tensor(diff::Shape{D, kNumFeatures});
  for (std::size_t r = 0; r < R; ++r) {
    const RowRef ref = rows[r];
    for (std::size_t s = 0; s < seq_len; ++s) {
      const auto src = f.at(ref.date + 1 - seq_len + s, ref.asset);
      std::copy(src.begin(), src.end(), b.sequences.data() + (s * R + r) * kNumFeatures);
    }
    const auto last = f.at(ref.date, ref.asset);
    std::copy(last.begin(), last.end(), b.last_step.data() + r * kNumFeatures);
  }
  for (std::size_t d = 0; d < D; ++d) {
    double* m = b.date_mean.data() + d * kNumFeatures;
    for (std::size_t r = offsets[d]; r < offsets[d + 1]; ++r) {
      for (std::size_t k = 0; k < kNumFeatures; ++k) m[k] += b.last_step.data()[r * kNumFeatures + k];
    }
    const double n = static_cast<double>(offsets[d + 1] - offsets[d]);
    for (std::size_t k = 0; k < kNumFeatures; ++k) m[k] /= n;
  }
  b.dates = std::move(dates);
  b.offsets = std::move(offsets);
  b.rows = std::move(rows);
  return b;
}

}  // namespace

BatchInput assemble_input(const features::FeaturePanel& f, std::span<const std::size_t> dates,
                          std::size_t seq_len,
                          const std::function<bool(std::size_t, std::size_t)>& include) {
  if (seq_len == 0) throw Error("assemble_input: sequence length must be positive");
  std::vector<std::size_t> kept;
  std::vector<std::size_t> offsets{0};
  std::vector<RowRef> rows;
  for (std::size_t t : dates) {
    const std::size_t before = rows.size();
    for (std::size_t i = 0; i < f.n_assets(); ++i) {
      if (!sequence_valid(f, t, i, seq_len)) continue;
      if (include && !include(t, i)) continue;
      rows.push_back({t, i});
    }
    if (rows.size() == before) continue;
    kept.push_back(t);
    offsets.push_back(rows.size());
  }
  return fill(f, std::move(kept), std::move(offsets), std::move(rows), seq_len);
}

BatchInput permute_rows(const BatchInput& in,
                        const std::function<std::vector<std::size_t>(std::size_t)>& order) {
  BatchInput out = in;
  const std::size_t R = in.n_rows();
  for (std::size_t d = 0; d < in.n_dates(); ++d) {
    const std::size_t base = in.offsets[d];
    const std::size_t n = in.offsets[d + 1] - base;
    const std::vector<std::size_t> perm = order(d);
    if (perm.size() != n) throw Error("permute_rows: permutation has the wrong length");
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t src = base + perm[j];
      const std::size_t dst = base + j;
      out.rows[dst] = in.rows[src];
      std::copy_n(in.last_step.data() + src * kNumFeatures, kNumFeatures,
                  out.last_step.data() + dst * kNumFeatures);
      for (std::size_t s = 0; s < in.seq_len; ++s) {
        std::copy_n(in.sequences.data() + (s * R + src) * kNumFeatures, kNumFeatures,
                    out.sequences.data() + (s * R + dst) * kNumFeatures);
      }
    }
  }
  return out;
}

}  // namespace unimom::model
