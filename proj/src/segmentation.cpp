#include "wsense/segmentation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "wsense/errors.hpp"

namespace wsense {

void SegmentationConfig::validate() const {
  if (n < 2) throw ConfigError("window length must exceed one sample");
  if (overlap < 1 || overlap > n - 1) {
    throw ConfigError("overlap " + std::to_string(overlap) + " outside [1, " + std::to_string(n - 1) +
                      "] for window " + std::to_string(n));
  }
}

SegmentationConfig SegmentationConfig::from_fraction(std::size_t n, double fraction, double delta_t) {
  SegmentationConfig cfg{n, static_cast<std::size_t>(std::lround(static_cast<double>(n) * fraction)),
                         delta_t};
  cfg.validate();
  return cfg;
}

std::vector<std::size_t> window_starts(std::size_t length, const SegmentationConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + cfg.n <= length; s += cfg.step()) starts.push_back(s);
  return starts;
}

std::size_t expected_count(std::size_t length, std::size_t n, std::size_t overlap) {
  if (length < n) return 0;
  return (length - n) / (n - overlap) + 1;
}

std::vector<Window> segment(const Tensor& stream, std::span<const int> labels,
                            const SegmentationConfig& cfg, const std::string& source) {
  cfg.validate();
  if (stream.rank() != 2) throw DimensionError("stream must be (length, channels)");
  const std::size_t length = stream.extent(0), channels = stream.extent(1);
  if (labels.size() != length) {
    throw DimensionError("stream has " + std::to_string(length) + " samples but " +
                         std::to_string(labels.size()) + " labels");
  }

  // Index of the next label change at or after each sample, for O(1) purity checks.
  std::vector<std::size_t> run_end(length);
  for (std::size_t i = length; i-- > 0;) {
    run_end[i] = (i + 1 < length && labels[i + 1] == labels[i]) ? run_end[i + 1] : i + 1;
  }

  std::vector<Window> out;
  for (std::size_t s : window_starts(length, cfg)) {
    if (run_end[s] < s + cfg.n) continue;
    Window w;
    w.start = s;
    w.label = labels[s];
    w.source = source;
    const auto first = stream.data().begin() + static_cast<std::ptrdiff_t>(s * channels);
    w.values = Tensor(Shape{cfg.n, channels},
                      std::vector<double>(first, first + static_cast<std::ptrdiff_t>(cfg.n * channels)));
    out.push_back(std::move(w));
  }
  return out;
}

void save_windows(const std::filesystem::path& stem, std::span<const Window> windows) {
  std::ofstream manifest(stem.string() + ".manifest");
  if (!manifest) throw IoError("cannot write " + stem.string() + ".manifest");
  Shape shape{windows.size(), 0, 0};
  if (!windows.empty()) {
    shape[1] = windows.front().values.extent(0);
    shape[2] = windows.front().values.extent(1);
  }
  Tensor payload(shape);
  std::size_t off = 0;
  for (const auto& w : windows) {
    if (w.values.shape() != windows.front().values.shape()) {
      throw DimensionError("windows of differing shape cannot share one payload");
    }
    manifest << w.start << ' ' << w.label << ' ' << (w.source.empty() ? "-" : w.source) << '\n';
    std::copy(w.values.data().begin(), w.values.data().end(), payload.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += w.values.size();
  }
  save_tensor(stem.string() + ".wsnt", payload);
}

std::vector<Window> load_windows(const std::filesystem::path& stem) {
  std::ifstream manifest(stem.string() + ".manifest");
  if (!manifest) throw IoError("cannot read " + stem.string() + ".manifest");
  const Tensor payload = load_tensor(stem.string() + ".wsnt");
  if (payload.rank() != 3) throw FormatError("window payload must be rank 3");
  const std::size_t n = payload.extent(1), c = payload.extent(2);
  std::vector<Window> out;
  for (std::string line; std::getline(manifest, line);) {
    if (line.empty()) continue;
    std::istringstream is(line);
    Window w;
    if (!(is >> w.start >> w.label >> std::ws) || !std::getline(is, w.source) || w.source.empty()) {
      throw FormatError("bad manifest line: " + line);
    }
    if (w.source == "-") w.source.clear();
    const std::size_t i = out.size();
    if (i >= payload.extent(0)) throw FormatError("manifest lists more windows than the payload");
    const auto first = payload.data().begin() + static_cast<std::ptrdiff_t>(i * n * c);
    w.values = Tensor(Shape{n, c}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n * c)));
    out.push_back(std::move(w));
  }
  if (out.size() != payload.extent(0)) throw FormatError("manifest and payload window counts differ");
  return out;
}

}  // namespace wsense
