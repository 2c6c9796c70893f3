#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wsense/dataset.hpp"

namespace wsense {

// Seeded stand-ins for the sensor corpora. Each class owns a fixed signature:
// a per-channel offset, a dominant channel and a frequency. Samples add a
// random phase and Gaussian noise on top, so classes are separable but no two
// windows are identical.

struct SyntheticWindows {
  std::size_t n_classes = 6;
  std::size_t channels = 3;
  std::size_t window = 40;
  std::size_t per_class = 100;
  double noise = 0.3;
  std::uint64_t seed = 0;
};

/// per_class windows of shape (window, channels) for every class, ordered by
/// class. Throws ConfigError on zero sizes or fewer than two classes.
std::vector<Window> synthetic_windows(const SyntheticWindows& cfg);

struct SyntheticCorpus {
  std::size_t n_classes = 6;
  std::size_t channels = 3;
  double sample_rate = 20.0;
  std::size_t users = 2;
  std::size_t bout_samples = 800;  // samples per activity bout
  double noise = 0.3;
  std::uint64_t seed = 0;
};

/// One stream per user. Each stream visits every class once in a seeded
/// order, bout_samples samples per visit, with a continuous time base.
std::vector<SensorStream> synthetic_streams(const SyntheticCorpus& cfg);

/// Corpus shaped after a dataset profile: its channels, classes and rate.
SyntheticCorpus corpus_for(Dataset d, std::uint64_t seed = 0);

/// Writes 3-channel streams as raw WISDM records
/// (`user,activity,timestamp,x,y,z;`), one user id per stream. Timestamps
/// are nanoseconds from the sample rate.
void write_wisdm_text(std::ostream& out, std::span<const SensorStream> streams,
                      std::span<const std::string> class_names);

}  // namespace wsense
