#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wsense/tensor.hpp"

namespace wsense {

/// Sliding-window geometry: windows of `n` samples, consecutive windows
/// sharing `overlap` samples, sampled every `delta_t` seconds.
struct SegmentationConfig {
  std::size_t n = 0;
  std::size_t overlap = 0;
  double delta_t = 0.0;

  /// Throws ConfigError unless n > 1 and 1 <= overlap <= n - 1.
  void validate() const;

  std::size_t step() const { return n - overlap; }
  /// (n - 1) * delta_t seconds.
  double duration() const { return static_cast<double>(n - 1) * delta_t; }
  /// overlap * delta_t seconds.
  double overlap_seconds() const { return static_cast<double>(overlap) * delta_t; }
  /// overlap / n.
  double overlap_fraction() const { return static_cast<double>(overlap) / static_cast<double>(n); }

  /// Overlap given as a fraction of the window: overlap = round(n * fraction).
  static SegmentationConfig from_fraction(std::size_t n, double fraction, double delta_t);
};

struct Window {
  std::size_t start = 0;  // k * (n - overlap)
  Tensor values;          // (n, channels)
  int label = 0;
  std::string source;
};

/// Windows W_k = {x_{k(n-p)}, ..., x_{k(n-p)+n-1}} for k = 0, 1, ... while the
/// window fits in the stream. Windows whose samples carry more than one label
/// are discarded. A stream shorter than n yields no windows.
std::vector<Window> segment(const Tensor& stream, std::span<const int> labels,
                            const SegmentationConfig& cfg, const std::string& source = {});

/// Start indices of every window that fits, labels ignored.
std::vector<std::size_t> window_starts(std::size_t length, const SegmentationConfig& cfg);

/// floor((L - n) / (n - p)) + 1 when L >= n, else 0.
std::size_t expected_count(std::size_t length, std::size_t n, std::size_t overlap);

/// Writes `<stem>.manifest` (one "start label source" line per window) and
/// `<stem>.wsnt` (a (count, n, channels) tensor).
void save_windows(const std::filesystem::path& stem, std::span<const Window> windows);
std::vector<Window> load_windows(const std::filesystem::path& stem);

}  // namespace wsense
