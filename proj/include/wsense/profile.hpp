#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace wsense {

enum class Dataset { wisdm, pamap2 };

/// Fixed facts about each corpus and its default experiment settings.
struct DatasetProfile {
  Dataset id;
  std::string_view name;
  std::size_t channels;
  std::size_t classes;
  double sample_rate_hz;
  double overlap;  // fraction of the window shared by consecutive windows
  std::size_t batch_size;
  std::array<std::size_t, 8> windows;
};

const DatasetProfile& profile(Dataset d);
std::optional<Dataset> parse_dataset(std::string_view name);

}  // namespace wsense
