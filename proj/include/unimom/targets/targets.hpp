#pragma once

#include <array>
#include <cstddef>
#include <filesystem>

#include "unimom/data/panel.hpp"
#include "unimom/grid.hpp"

namespace unimom::targets {

/// Forward horizons of the fast, medium and slow tasks, in trading days.
inline constexpr std::array<std::size_t, 3> kHorizons{20, 60, 120};
inline constexpr double kTargetClip = 10.0;
inline constexpr double kTargetVolFloor = 1e-8;

/// Forward-looking signal for one horizon.
struct TargetSlice {
  std::size_t horizon = 0;
  Grid<double> values;
  Mask valid;
};

/// The three task targets, indexed like kHorizons.
struct TargetPanel {
  std::vector<data::Date> calendar;
  std::array<TargetSlice, 3> slices;
};

/// y(t) = ln(P_{t+s} / P_t) / sigma, with sigma the population std of the s
/// daily log returns in (t, t+s] floored at 1e-8, clipped to [-10, 10].
/// Valid only when P_t .. P_{t+s} are all valid. Throws DataError unless
/// s is 20, 60 or 120.
TargetSlice forward_tsmom(const data::PricePanel& panel, std::size_t horizon);

TargetPanel all_targets(const data::PricePanel& panel);

/// `date,asset,target` for the valid cells of one slice.
void save_targets(const TargetSlice& slice, const data::PricePanel& panel,
                  const std::filesystem::path& path);

}  // namespace unimom::targets
