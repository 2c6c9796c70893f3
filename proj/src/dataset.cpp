#include "wsense/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "wsense/errors.hpp"
#include "wsense/rng.hpp"

namespace wsense {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

int wisdm_class(std::string_view name) {
  for (std::size_t i = 0; i < kWisdmClasses.size(); ++i)
    if (kWisdmClasses[i] == name) return static_cast<int>(i);
  return -1;
}

struct StreamBuilder {
  std::string source;
  std::vector<double> values;
  std::vector<int> labels;

  SensorStream finish(std::size_t channels, double rate) {
    const std::size_t n = labels.size();
    return SensorStream{std::move(source), Tensor(Shape{n, channels}, std::move(values)),
                        std::move(labels), rate};
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// WISDM

LoadResult parse_wisdm(std::istream& in) {
  LoadResult result;
  for (auto name : kWisdmClasses) result.class_names.emplace_back(name);

  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  StreamBuilder current;
  bool open = false;
  auto flush = [&] {
    if (open && !current.labels.empty()) result.streams.push_back(current.finish(3, 20.0));
    current = StreamBuilder{};
    open = false;
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find_first_of(";\n", pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view record = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    if (record.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t f = 0;
    while (true) {
      const auto comma = record.find(',', f);
      fields.push_back(trim(record.substr(f, comma == std::string_view::npos ? record.npos : comma - f)));
      if (comma == std::string_view::npos) break;
      f = comma + 1;
    }
    // A trailing comma leaves one empty field; tolerate it.
    if (fields.size() == 7 && fields.back().empty()) fields.pop_back();

    double ts = 0, x = 0, y = 0, z = 0;
    const int label = fields.size() == 6 ? wisdm_class(fields[1]) : -1;
    if (fields.size() != 6 || fields[0].empty() || label < 0 || !parse_double(fields[2], ts) ||
        !parse_double(fields[3], x) || !parse_double(fields[4], y) || !parse_double(fields[5], z) ||
        !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      ++result.malformed;
      continue;
    }
    const std::string user(fields[0]);
    if (!open || current.source != user) {
      flush();
      current.source = user;
      open = true;
    }
    current.values.insert(current.values.end(), {x, y, z});
    current.labels.push_back(label);
    ++result.rows;
  }
  flush();
  if (result.rows == 0) throw FormatError("no valid WISDM records");
  return result;
}

LoadResult load_wisdm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read WISDM file " + path.string());
  return parse_wisdm(in);
}

// ---------------------------------------------------------------------------
// PAMAP2

namespace {

constexpr std::size_t kPamapColumns = 54;
constexpr std::size_t kImuFirstColumn[3] = {3, 20, 37};
constexpr std::size_t kPamapChannels = 36;

int pamap_class(double activity_id) {
  for (std::size_t i = 0; i < kPamap2ActivityIds.size(); ++i)
    if (activity_id == kPamap2ActivityIds[i]) return static_cast<int>(i);
  return -1;
}

// Fills NaN runs of at most `max_gap` samples in every channel of a
// contiguous segment; returns per-row "must drop" flags for longer runs.
std::vector<bool> repair_gaps(std::vector<double>& rows, std::size_t n, std::size_t max_gap) {
  std::vector<bool> drop(n, false);
  for (std::size_t c = 0; c < kPamapChannels; ++c) {
    auto at = [&](std::size_t r) -> double& { return rows[r * kPamapChannels + c]; };
    std::size_t r = 0;
    while (r < n) {
      if (!std::isnan(at(r))) {
        ++r;
        continue;
      }
      std::size_t end = r;
      while (end < n && std::isnan(at(end))) ++end;
      const std::size_t len = end - r;
      const bool has_left = r > 0, has_right = end < n;
      if (len > max_gap || (!has_left && !has_right)) {
        for (std::size_t i = r; i < end; ++i) drop[i] = true;
      } else if (has_left && has_right) {
        const double a = at(r - 1), b = at(end);
        for (std::size_t i = r; i < end; ++i) {
          const double t = static_cast<double>(i - r + 1) / static_cast<double>(len + 1);
          at(i) = a + (b - a) * t;
        }
      } else {
        const double v = has_left ? at(r - 1) : at(end);
        for (std::size_t i = r; i < end; ++i) at(i) = v;
      }
      r = end;
    }
  }
  return drop;
}

}  // namespace

LoadResult parse_pamap2(std::istream& in, const std::string& source, const Pamap2Options& options) {
  if (options.decimate == 0) throw ConfigError("decimate factor must be positive");
  LoadResult result;
  for (auto name : kPamap2Classes) result.class_names.emplace_back(name);
  const double rate = 100.0;
  const auto max_gap = static_cast<std::size_t>(std::floor(options.max_gap_seconds * rate));

  // Contiguous runs of protocol rows: channel values and labels.
  std::vector<std::vector<double>> seg_values(1);
  std::vector<std::vector<int>> seg_labels(1);

  std::string line;
  std::size_t line_no = 0;
  std::vector<double> cols(kPamapColumns);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::istringstream is(line);
    std::size_t count = 0;
    for (std::string tok; is >> tok;) {
      if (count < kPamapColumns) {
        const char* s = tok.c_str();
        char* endp = nullptr;
        cols[count] = std::strtod(s, &endp);
        if (endp == s || *endp != '\0') {
          throw FormatError(source + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
        }
      }
      ++count;
    }
    if (count != kPamapColumns) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected 54 columns, got " +
                        std::to_string(count));
    }
    const int label = pamap_class(cols[1]);
    if (label < 0) {
      ++result.dropped;
      if (!seg_labels.back().empty()) {
        seg_values.emplace_back();
        seg_labels.emplace_back();
      }
      continue;
    }
    auto& v = seg_values.back();
    for (std::size_t imu = 0; imu < 3; ++imu) {
      // Skip the temperature column; keep acc16g, acc6g, gyro, mag.
      const std::size_t base = kImuFirstColumn[imu] + 1;
      v.insert(v.end(), cols.begin() + static_cast<std::ptrdiff_t>(base),
               cols.begin() + static_cast<std::ptrdiff_t>(base + 12));
    }
    seg_labels.back().push_back(label);
  }

  for (std::size_t s = 0; s < seg_labels.size(); ++s) {
    const std::size_t n = seg_labels[s].size();
    if (n == 0) continue;
    const std::vector<bool> drop = repair_gaps(seg_values[s], n, max_gap);
    StreamBuilder piece;
    auto flush = [&] {
      if (!piece.labels.empty()) {
        piece.source = source;
        result.streams.push_back(piece.finish(kPamapChannels, rate / static_cast<double>(options.decimate)));
      }
      piece = StreamBuilder{};
    };
    std::size_t kept_in_piece = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (drop[r]) {
        ++result.dropped;
        flush();
        kept_in_piece = 0;
        continue;
      }
      if (kept_in_piece++ % options.decimate != 0) continue;
      const auto first = seg_values[s].begin() + static_cast<std::ptrdiff_t>(r * kPamapChannels);
      piece.values.insert(piece.values.end(), first, first + kPamapChannels);
      piece.labels.push_back(seg_labels[s][r]);
      ++result.rows;
    }
    flush();
  }
  return result;
}

LoadResult load_pamap2(const std::filesystem::path& path, const Pamap2Options& options) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& entry : std::filesystem::directory_iterator(path))
      if (entry.path().extension() == ".dat") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .dat files in " + path.string());
  } else {
    files.push_back(path);
  }
  LoadResult all;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read PAMAP2 file " + file.string());
    LoadResult one = parse_pamap2(in, file.stem().string(), options);
    all.class_names = std::move(one.class_names);
    all.rows += one.rows;
    all.malformed += one.malformed;
    all.dropped += one.dropped;
    for (auto& s : one.streams) all.streams.push_back(std::move(s));
  }
  return all;
}

// ---------------------------------------------------------------------------

std::vector<Window> segment_streams(std::span<const SensorStream> streams,
                                    const SegmentationConfig& cfg) {
  std::vector<Window> out;
  for (const auto& s : streams) {
    auto w = segment(s.channels, s.labels, cfg, s.source);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

void save_stream(const std::filesystem::path& path, const SensorStream& stream) {
  TensorSet set;
  set.emplace("channels", stream.channels);
  Tensor labels(Shape{stream.labels.size()});
  for (std::size_t i = 0; i < stream.labels.size(); ++i) labels[i] = stream.labels[i];
  set.emplace("labels", std::move(labels));
  set.emplace("sample_rate", Tensor::scalar(stream.sample_rate));
  set.emplace("source/" + stream.source, Tensor(Shape{0}));
  save_tensor_set(path, set);
}

SensorStream load_stream(const std::filesystem::path& path) {
  TensorSet set = load_tensor_set(path);
  SensorStream s;
  for (auto& [name, t] : set) {
    if (name == "channels") {
      s.channels = t;
    } else if (name == "labels") {
      s.labels.reserve(t.size());
      for (double v : t.data()) s.labels.push_back(static_cast<int>(v));
    } else if (name == "sample_rate") {
      s.sample_rate = t[0];
    } else if (name.rfind("source/", 0) == 0) {
      s.source = name.substr(7);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Split

std::vector<std::size_t> class_histogram(std::span<const Window> windows, std::size_t n_classes) {
  std::vector<std::size_t> h(n_classes, 0);
  for (const auto& w : windows) {
    if (w.label < 0 || static_cast<std::size_t>(w.label) >= n_classes) {
      throw ValueError("window label " + std::to_string(w.label) + " outside 0.." +
                       std::to_string(n_classes - 1));
    }
    ++h[static_cast<std::size_t>(w.label)];
  }
  return h;
}

DatasetSplit make_split(std::vector<Window> windows, std::vector<std::string> class_names,
                        double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in [0, 1)");
  }
  const std::size_t K = class_names.size();
  const auto hist = class_histogram(windows, K);
  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    by_class[static_cast<std::size_t>(windows[i].label)].push_back(i);
  }
  for (std::size_t c = 0; c < K; ++c) {
    if (hist[c] == 1) {
      throw ValueError("class '" + class_names[c] + "' has a single window; cannot stratify");
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& idx : by_class) {
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(idx.size()) * test_fraction));
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  rng.shuffle(std::span<std::size_t>(train_idx));
  rng.shuffle(std::span<std::size_t>(test_idx));

  DatasetSplit split;
  split.class_names = std::move(class_names);
  split.seed = seed;
  split.test_fraction = test_fraction;
  for (auto i : train_idx) split.train.push_back(std::move(windows[i]));
  for (auto i : test_idx) split.test.push_back(std::move(windows[i]));

  const std::size_t C = split.train.empty() ? (split.test.empty() ? 0 : split.test[0].values.extent(1))
                                            : split.train[0].values.extent(1);
  split.mean = Tensor(Shape{C});
  split.stddev = Tensor(Shape{C});
  std::size_t count = 0;
  for (const auto& w : split.train) {
    const std::size_t n = w.values.extent(0);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < C; ++c) split.mean[c] += w.values[t * C + c];
    count += n;
  }
  if (count == 0) return split;
  for (std::size_t c = 0; c < C; ++c) split.mean[c] /= static_cast<double>(count);
  for (const auto& w : split.train) {
    const std::size_t n = w.values.extent(0);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = w.values[t * C + c] - split.mean[c];
        split.stddev[c] += d * d;
      }
  }
  for (std::size_t c = 0; c < C; ++c) split.stddev[c] = std::sqrt(split.stddev[c] / static_cast<double>(count));

  auto normalize = [&](std::vector<Window>& part) {
    for (auto& w : part) {
      const std::size_t n = w.values.extent(0);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t c = 0; c < C; ++c) {
          double& v = w.values[t * C + c];
          v -= split.mean[c];
          // Constant channels normalise to zero.
          if (split.stddev[c] > 1e-12) v /= split.stddev[c];
        }
    }
  };
  normalize(split.train);
  normalize(split.test);
  return split;
}

Tensor stack_windows(std::span<const Window> windows) {
  std::vector<std::size_t> idx(windows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return stack_windows(windows, idx);
}

Tensor stack_windows(std::span<const Window> windows, std::span<const std::size_t> indices) {
  if (indices.empty()) return Tensor(Shape{0, 0, 0});
  const Shape& ws = windows[indices[0]].values.shape();
  Tensor out(Shape{indices.size(), ws[0], ws[1]});
  const std::size_t stride = ws[0] * ws[1];
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& v = windows[indices[i]].values;
    if (v.shape() != ws) throw DimensionError("cannot stack windows of differing shape");
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

void save_split(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "split.manifest");
  if (!out) throw IoError("cannot write split manifest in " + dir.string());
  const std::size_t K = split.class_names.size();
  const auto train_h = class_histogram(split.train, K);
  const auto test_h = class_histogram(split.test, K);
  out << std::setprecision(17);
  out << "seed " << split.seed << '\n';
  out << "test_fraction " << split.test_fraction << '\n';
  out << "normalization zscore-train\n";
  out << "train " << split.train.size() << '\n';
  out << "test " << split.test.size() << '\n';
  for (std::size_t c = 0; c < K; ++c) {
    out << "class " << c << ' ' << train_h[c] << ' ' << test_h[c] << ' ' << split.class_names[c] << '\n';
  }
  out << "mean";
  for (double v : split.mean.data()) out << ' ' << v;
  out << "\nstd";
  for (double v : split.stddev.data()) out << ' ' << v;
  out << '\n';
  save_windows(dir / "train", split.train);
  save_windows(dir / "test", split.test);
}

}  // namespace wsense
