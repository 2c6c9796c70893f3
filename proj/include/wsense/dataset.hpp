#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsense/profile.hpp"
#include "wsense/segmentation.hpp"
#include "wsense/tensor.hpp"

namespace wsense {

/// One contiguous recording: (length, channels) samples with one class id
/// per sample.
struct SensorStream {
  std::string source;
  Tensor channels;
  std::vector<int> labels;
  double sample_rate = 0.0;
};

struct LoadResult {
  std::vector<SensorStream> streams;
  std::vector<std::string> class_names;
  std::size_t rows = 0;       // samples kept
  std::size_t malformed = 0;  // records dropped as unparseable
  std::size_t dropped = 0;    // well-formed records dropped by filtering
};

inline constexpr std::array<std::string_view, 6> kWisdmClasses = {
    "Downstairs", "Jogging", "Sitting", "Standing", "Upstairs", "Walking"};

/// PAMAP2 protocol activities and their ids in the raw files.
inline constexpr std::array<std::string_view, 12> kPamap2Classes = {
    "lying",           "sitting",           "standing",         "walking",
    "running",         "cycling",           "Nordic walking",   "ascending stairs",
    "descending stairs", "vacuum cleaning", "ironing",          "rope jumping"};
inline constexpr std::array<int, 12> kPamap2ActivityIds = {1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24};

/// Raw WISDM text: `user,activity,timestamp,x,y,z;` records. A new stream
/// starts whenever the user changes. Unparseable records are dropped and
/// counted. Throws IoError if unreadable, FormatError if no record parses.
LoadResult load_wisdm(const std::filesystem::path& path);
LoadResult parse_wisdm(std::istream& in);

struct Pamap2Options {
  std::size_t decimate = 1;      // keep every n-th sample
  double max_gap_seconds = 1.0;  // longer NaN runs are cut out
};

/// PAMAP2 `.dat` file, or a directory whose `*.dat` files are read in name
/// order. Keeps acc16g, acc6g, gyro and magnetometer of the three IMUs (36
/// channels) and the twelve protocol activities.
LoadResult load_pamap2(const std::filesystem::path& path, const Pamap2Options& options = {});
LoadResult parse_pamap2(std::istream& in, const std::string& source,
                        const Pamap2Options& options = {});

/// Segments every stream; windows never cross stream boundaries.
std::vector<Window> segment_streams(std::span<const SensorStream> streams,
                                    const SegmentationConfig& cfg);

/// Bitwise round-trip of a stream through one tensor-set file.
void save_stream(const std::filesystem::path& path, const SensorStream& stream);
SensorStream load_stream(const std::filesystem::path& path);

struct DatasetSplit {
  std::vector<Window> train;
  std::vector<Window> test;
  Tensor mean;    // per channel, fitted on train
  Tensor stddev;  // per channel, fitted on train; zero for constant channels
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  double test_fraction = 0.0;
};

/// Seeded stratified partition: each class contributes round(count *
/// test_fraction) windows to test. Both partitions are z-scored with train
/// statistics. Throws ValueError for a class holding a single window or a
/// label outside the class table.
DatasetSplit make_split(std::vector<Window> windows, std::vector<std::string> class_names,
                        double test_fraction = 0.2, std::uint64_t seed = 0);

std::vector<std::size_t> class_histogram(std::span<const Window> windows, std::size_t n_classes);

/// Stacks window values into (count, n, channels).
Tensor stack_windows(std::span<const Window> windows);
Tensor stack_windows(std::span<const Window> windows, std::span<const std::size_t> indices);

/// `split.manifest` (text) plus train/test window payloads in `dir`.
void save_split(const DatasetSplit& split, const std::filesystem::path& dir);

}  // namespace wsense
