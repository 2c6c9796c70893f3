#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "wsense/errors.hpp"
#include "wsense/segmentation.hpp"

using namespace wsense;

namespace {

Tensor ramp(std::size_t L, std::size_t c) {
  Tensor t({L, c});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  return t;
}

}  // namespace

TEST(Segment, WorkedExample) {
  const SegmentationConfig cfg{4, 2, 0.05};
  const std::vector<int> labels(10, 1);
  const auto w = segment(ramp(10, 1), labels, cfg);
  ASSERT_EQ(w.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(w[k].start, 2 * k);
    EXPECT_EQ(w[k].values, Tensor({4, 1}, {double(2 * k), double(2 * k + 1), double(2 * k + 2), double(2 * k + 3)}));
    EXPECT_EQ(w[k].label, 1);
  }
  EXPECT_EQ(expected_count(10, 4, 2), 4u);
}

TEST(Segment, ConfigBounds) {
  EXPECT_THROW((SegmentationConfig{4, 4, 1}.validate()), ConfigError);
  EXPECT_THROW((SegmentationConfig{4, 0, 1}.validate()), ConfigError);
  EXPECT_THROW(segment(ramp(10, 1), std::vector<int>(10, 0), SegmentationConfig{4, 4, 1}), ConfigError);
  const SegmentationConfig c{80, 40, 0.05};
  EXPECT_DOUBLE_EQ(c.duration(), 79 * 0.05);
  EXPECT_DOUBLE_EQ(c.overlap_seconds(), 2.0);
  EXPECT_DOUBLE_EQ(c.overlap_fraction(), 0.5);
  EXPECT_EQ(SegmentationConfig::from_fraction(171, 0.78, 0.01).overlap, 133u);
  EXPECT_EQ(SegmentationConfig::from_fraction(171, 0.78, 0.01).step(), 38u);
  EXPECT_EQ(SegmentationConfig::from_fraction(80, 0.5, 0.05).overlap, 40u);
}

TEST(Segment, ExpectedCountEdges) {
  EXPECT_EQ(expected_count(7, 7, 3), 1u);
  EXPECT_EQ(expected_count(6, 7, 3), 0u);
  EXPECT_TRUE(segment(ramp(3, 2), std::vector<int>(3, 0), SegmentationConfig{4, 1, 1}).empty());
}

TEST(Segment, MatchesBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    const std::size_t p = 1 + rng.below(n - 1);
    const std::size_t L = rng.below(400);
    const auto brute = oracle::brute_starts(L, n, p);
    const SegmentationConfig cfg{n, p, 0.01};
    EXPECT_EQ(window_starts(L, cfg), brute);
    EXPECT_EQ(expected_count(L, n, p), brute.size());
    const auto w = segment(ramp(L, 1), std::vector<int>(L, 0), cfg);
    ASSERT_EQ(w.size(), brute.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      EXPECT_EQ(w[k].start, brute[k]);
      EXPECT_EQ(w[k].values[0], static_cast<double>(brute[k]));
      if (k) EXPECT_EQ(w[k].start - w[k - 1].start, n - p);
    }
  }
}

TEST(Segment, MixedLabelWindowsDropped) {
  std::vector<int> labels(20, 0);
  for (std::size_t i = 9; i < 20; ++i) labels[i] = 1;
  const auto w = segment(ramp(20, 1), labels, SegmentationConfig{4, 2, 1});
  // Starts 0..16 step 2; those covering index 8 and 9 together are mixed.
  std::vector<std::size_t> starts;
  for (const auto& x : w) {
    starts.push_back(x.start);
    EXPECT_EQ(x.label, x.start < 9 ? 0 : 1);
  }
  EXPECT_EQ(starts, (std::vector<std::size_t>{0, 2, 4, 10, 12, 14, 16}));
}

TEST(Segment, DoublingHalvesCount) {
  for (std::size_t n : {20, 40, 80, 171}) {
    const std::size_t L = 200000;
    const std::size_t p = n / 2;
    const double a = static_cast<double>(expected_count(L, n, p));
    const double b = static_cast<double>(expected_count(L, 2 * n, 2 * p));
    EXPECT_GE(b, a / 2 - 1);
    EXPECT_LE(b, a / 2 + 1);
  }
}

TEST(Segment, WindowsSerialiseRoundTrip) {
  Rng rng(2);
  std::vector<int> labels(50, 2);
  const Tensor stream = oracle::random_tensor({50, 3}, rng);
  const auto w = segment(stream, labels, SegmentationConfig{10, 5, 0.05}, "subject 7");
  const auto stem = std::filesystem::temp_directory_path() / "wsense_windows_test";
  save_windows(stem, w);
  const auto back = load_windows(stem);
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(back[i].start, w[i].start);
    EXPECT_EQ(back[i].label, w[i].label);
    EXPECT_EQ(back[i].source, w[i].source);
    EXPECT_EQ(back[i].values, w[i].values);
  }
}
