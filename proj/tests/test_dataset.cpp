#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "wsense/dataset.hpp"
#include "wsense/errors.hpp"
#include "wsense/synthetic.hpp"

using namespace wsense;
namespace fs = std::filesystem;

TEST(Wisdm, ParsesPublishedRecord) {
  std::istringstream in("33,Jogging,49105962326000,-0.69,12.68,0.50;\n");
  const LoadResult r = parse_wisdm(in);
  ASSERT_EQ(r.streams.size(), 1u);
  EXPECT_EQ(r.rows, 1u);
  EXPECT_EQ(r.class_names[static_cast<std::size_t>(r.streams[0].labels[0])], "Jogging");
  EXPECT_EQ(r.streams[0].channels, Tensor({1, 3}, {-0.69, 12.68, 0.50}));
  EXPECT_EQ(r.streams[0].sample_rate, 20.0);
}

TEST(Wisdm, DropsMalformedAndSplitsUsers) {
  std::istringstream in(
      "1,Walking,0,1,2,3;\n"
      "1,Walking,1,1,2;\n"
      "\n"
      "1,Walking,2,4,5,6;1,Sitting,3,7,8,9;\n"
      "2,Walking,4,0,0,0,;\n"
      "2,Flying,5,0,0,0;\n");
  const LoadResult r = parse_wisdm(in);
  EXPECT_EQ(r.malformed, 2u);
  EXPECT_EQ(r.rows, 4u);
  ASSERT_EQ(r.streams.size(), 2u);
  EXPECT_EQ(r.streams[0].labels.size(), 3u);
  EXPECT_EQ(r.streams[1].source, "2");
}

TEST(Wisdm, EmptyIsFormatError) {
  std::istringstream in("");
  EXPECT_THROW(parse_wisdm(in), FormatError);
  EXPECT_THROW(load_wisdm("/nonexistent/wisdm.txt"), IoError);
}

TEST(Wisdm, SyntheticCorpusRoundTrip) {
  SyntheticCorpus cfg;
  cfg.users = 3;
  cfg.bout_samples = 50;
  const auto streams = synthetic_streams(cfg);
  std::vector<std::string> names(kWisdmClasses.begin(), kWisdmClasses.end());
  std::stringstream text;
  write_wisdm_text(text, streams, names);
  const LoadResult r = parse_wisdm(text);
  ASSERT_EQ(r.streams.size(), 3u);
  EXPECT_EQ(r.malformed, 0u);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(r.streams[s].labels, streams[s].labels);
    for (std::size_t i = 0; i < streams[s].channels.size(); ++i) {
      EXPECT_NEAR(r.streams[s].channels[i], streams[s].channels[i], 1e-8);
    }
  }
}

namespace {

// One PAMAP2 row: 54 columns, IMU blocks of 17 starting at column 3.
std::string pamap_row(double ts, int activity, double base, double gyro_override = 0.0, bool nan_gyro = false) {
  std::ostringstream o;
  o << ts << ' ' << activity << " 100";
  for (int imu = 0; imu < 3; ++imu) {
    o << " 30";  // temperature
    for (int k = 0; k < 12; ++k) {
      if (nan_gyro && imu == 1 && k == 6) {
        o << " NaN";
      } else if (gyro_override != 0.0 && imu == 1 && k == 6) {
        o << ' ' << gyro_override;
      } else {
        o << ' ' << base + imu * 100 + k;
      }
    }
    o << " 1 0 0 0";  // orientation
  }
  return o.str() + "\n";
}

}  // namespace

TEST(Pamap2, KeepsThirtySixChannels) {
  std::string text;
  for (int i = 0; i < 5; ++i) text += pamap_row(i * 0.01, 4, i);
  std::istringstream in(text);
  const LoadResult r = parse_pamap2(in, "subject101");
  ASSERT_EQ(r.streams.size(), 1u);
  const Tensor& c = r.streams[0].channels;
  ASSERT_EQ(c.shape(), (Shape{5, 36}));
  EXPECT_EQ(c.at({2, 0}), 2.0);      // first IMU, acc16 x
  EXPECT_EQ(c.at({2, 11}), 13.0);    // first IMU, mag z
  EXPECT_EQ(c.at({2, 12}), 102.0);   // second IMU starts after temperature
  EXPECT_EQ(c.at({2, 35}), 213.0);
  EXPECT_EQ(r.class_names[static_cast<std::size_t>(r.streams[0].labels[0])], "walking");
  EXPECT_EQ(r.streams[0].sample_rate, 100.0);
}

TEST(Pamap2, TransientRowsExcluded) {
  std::string text = pamap_row(0, 1, 0) + pamap_row(0.01, 1, 0) + pamap_row(0.02, 0, 0) + pamap_row(0.03, 0, 0) +
                     pamap_row(0.04, 2, 0);
  std::istringstream in(text);
  const LoadResult r = parse_pamap2(in, "s");
  EXPECT_EQ(r.rows, 3u);
  EXPECT_EQ(r.dropped, 2u);
  for (const auto& s : r.streams)
    for (int l : s.labels) EXPECT_NE(r.class_names[static_cast<std::size_t>(l)], "");
}

TEST(Pamap2, IsolatedNanInterpolated) {
  std::string text = pamap_row(0, 3, 0, 2.0) + pamap_row(0.01, 3, 0, 0, true) + pamap_row(0.02, 3, 0, 4.0);
  std::istringstream in(text);
  const LoadResult r = parse_pamap2(in, "s");
  ASSERT_EQ(r.streams.size(), 1u);
  EXPECT_EQ(r.streams[0].channels.at({1, 12 + 6}), 3.0);
  EXPECT_TRUE(r.streams[0].channels.all_finite());
}

TEST(Pamap2, LongGapDropped) {
  std::string text;
  for (int i = 0; i < 10; ++i) text += pamap_row(i * 0.01, 3, 0, 1.0);
  for (int i = 10; i < 160; ++i) text += pamap_row(i * 0.01, 3, 0, 0, true);
  for (int i = 160; i < 170; ++i) text += pamap_row(i * 0.01, 3, 0, 1.0);
  std::istringstream in(text);
  const LoadResult r = parse_pamap2(in, "s");
  std::size_t kept = 0;
  for (const auto& s : r.streams) {
    kept += s.labels.size();
    EXPECT_TRUE(s.channels.all_finite());
  }
  EXPECT_EQ(kept, 20u);
  EXPECT_EQ(r.streams.size(), 2u);
}

TEST(Pamap2, WrongColumnCountIsFormatError) {
  std::istringstream in("0 1 100 1 2 3\n");
  EXPECT_THROW(parse_pamap2(in, "s"), FormatError);
}

TEST(Pamap2, Decimation) {
  std::string text;
  for (int i = 0; i < 10; ++i) text += pamap_row(i * 0.01, 3, i);
  std::istringstream in(text);
  const LoadResult r = parse_pamap2(in, "s", Pamap2Options{2, 1.0});
  ASSERT_EQ(r.streams.size(), 1u);
  EXPECT_EQ(r.streams[0].labels.size(), 5u);
  EXPECT_EQ(r.streams[0].sample_rate, 50.0);
  EXPECT_EQ(r.streams[0].channels.at({1, 0}), 2.0);
}

TEST(Stream, RoundTripIsBitwise) {
  SyntheticCorpus cfg;
  cfg.users = 1;
  cfg.bout_samples = 30;
  const SensorStream s = synthetic_streams(cfg).front();
  const fs::path path = fs::temp_directory_path() / "wsense_stream_test.wsns";
  save_stream(path, s);
  const SensorStream back = load_stream(path);
  EXPECT_EQ(back.source, s.source);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.channels, s.channels);
  EXPECT_EQ(back.sample_rate, s.sample_rate);
  fs::remove(path);
}

namespace {

std::vector<Window> labelled_windows(const std::vector<std::size_t>& per_class, Rng& rng) {
  std::vector<Window> out;
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    for (std::size_t i = 0; i < per_class[k]; ++i) {
      Window w;
      w.label = static_cast<int>(k);
      w.start = i;
      w.values = oracle::random_tensor({8, 3}, rng, -5 + double(k), 5 + 3 * double(k));
      out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace

TEST(Split, StratifiedAndNormalised) {
  Rng rng(1);
  const std::vector<std::size_t> counts{50, 31, 7, 120};
  const auto windows = labelled_windows(counts, rng);
  const std::vector<std::string> names{"a", "b", "c", "d"};
  const DatasetSplit s = make_split(windows, names, 0.2, 3);
  const auto tr = class_histogram(s.train, 4), te = class_histogram(s.test, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(tr[k] + te[k], counts[k]);
    EXPECT_EQ(te[k], static_cast<std::size_t>(std::lround(counts[k] * 0.2)));
  }
  // Train channels are z-scored.
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (const auto& w : s.train)
      for (std::size_t t = 0; t < 8; ++t) {
        sum += w.values.at({t, c});
        ++n;
      }
    const double mean = sum / n;
    for (const auto& w : s.train)
      for (std::size_t t = 0; t < 8; ++t) sq += std::pow(w.values.at({t, c}) - mean, 2);
    EXPECT_LT(std::abs(mean), 1e-9);
    EXPECT_NEAR(std::sqrt(sq / n), 1.0, 1e-9);
  }
}

TEST(Split, TestStatisticsNeverUsed) {
  Rng rng(2);
  auto windows = labelled_windows({20, 20}, rng);
  const DatasetSplit a = make_split(windows, {"a", "b"}, 0.25, 5);
  // Perturb every window that ended up in test; train statistics must not move.
  std::vector<Window> changed = windows;
  std::vector<std::size_t> test_ids;
  for (const auto& t : a.test) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
      if (windows[i].label == t.label && windows[i].start == t.start) test_ids.push_back(i);
    }
  }
  for (auto i : test_ids) changed[i].values.fill(1e3);
  const DatasetSplit b = make_split(changed, {"a", "b"}, 0.25, 5);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stddev, b.stddev);
}

TEST(Split, DeterministicAndEdgeCases) {
  Rng rng(3);
  const auto windows = labelled_windows({10, 12}, rng);
  const DatasetSplit a = make_split(windows, {"a", "b"}, 0.2, 9);
  const DatasetSplit b = make_split(windows, {"a", "b"}, 0.2, 9);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].values, b.train[i].values);

  const DatasetSplit all = make_split(windows, {"a", "b"}, 0.0, 9);
  EXPECT_EQ(all.train.size(), 22u);
  EXPECT_TRUE(all.test.empty());

  EXPECT_THROW(make_split(labelled_windows({10, 1}, rng), {"a", "b"}, 0.2, 0), ValueError);
  // A class with no windows at all is simply absent.
  EXPECT_NO_THROW(make_split(labelled_windows({10, 0, 5}, rng), {"a", "b", "c"}, 0.2, 0));
}

TEST(Split, ConstantChannelNormalisesToZero) {
  std::vector<Window> windows;
  for (int i = 0; i < 10; ++i) {
    Window w;
    w.label = i % 2;
    w.values = Tensor({4, 2}, {double(i), 7, double(i + 1), 7, double(i), 7, double(i), 7});
    windows.push_back(w);
  }
  const DatasetSplit s = make_split(windows, {"a", "b"}, 0.2, 1);
  for (const auto& w : s.train) {
    EXPECT_EQ(w.values.at({0, 1}), 0.0);
    EXPECT_TRUE(w.values.all_finite());
  }
}

TEST(Split, ManifestWritten) {
  Rng rng(4);
  const DatasetSplit s = make_split(labelled_windows({6, 6}, rng), {"a", "b"}, 0.5, 2);
  const fs::path dir = fs::temp_directory_path() / "wsense_split_test";
  fs::remove_all(dir);
  save_split(s, dir);
  std::ifstream in(dir / "split.manifest");
  std::stringstream text;
  text << in.rdbuf();
  EXPECT_NE(text.str().find("seed 2"), std::string::npos) << text.str();
  fs::remove_all(dir);
}
