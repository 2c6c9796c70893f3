#pragma once

#include <cstddef>
#include <optional>

#include "wsense/model.hpp"
#include "wsense/profile.hpp"

namespace wsense {

/// Published parameter count for one (dataset, architecture, window) cell.
///
/// Most cells are exact. The PAMAP2 baseline and SE rows are only published
/// in millions to three decimals, truncated; for those `value` holds the
/// count in thousands and a total matches when floor(total / 1000) == value.
struct GoldenCount {
  std::size_t value = 0;
  bool thousands = false;
};

std::optional<GoldenCount> golden_count(Dataset d, Arch arch, std::size_t window);
bool golden_matches(const GoldenCount& golden, std::size_t total);

}  // namespace wsense
