#include "wsense/synthetic.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>

#include "wsense/errors.hpp"
#include "wsense/rng.hpp"

namespace wsense {

namespace {

struct Signature {
  std::vector<double> offset;  // per channel
  std::size_t dominant = 0;
  double cycles_per_sample = 0.0;
};

// Signatures depend on the seed only through a dedicated stream, so the same
// seed gives the same classes whatever the sample counts are.
std::vector<Signature> signatures(std::size_t n_classes, std::size_t channels, std::uint64_t seed) {
  Rng rng(seed ^ 0x5eed5eed5eedULL);
  std::vector<Signature> out(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) {
    out[k].offset.resize(channels);
    for (auto& o : out[k].offset) o = rng.uniform(-1.5, 1.5);
    out[k].dominant = k % channels;
    out[k].cycles_per_sample = 0.02 + 0.03 * static_cast<double>(k);
  }
  return out;
}

double sample(const Signature& s, std::size_t ch, double t, double phase, double noise, Rng& rng) {
  const double amp = ch == s.dominant ? 1.5 : 0.3;
  return s.offset[ch] + amp * std::sin(2.0 * std::numbers::pi * s.cycles_per_sample * t + phase) +
         noise * rng.normal();
}

}  // namespace

std::vector<Window> synthetic_windows(const SyntheticWindows& cfg) {
  if (cfg.n_classes < 2 || cfg.channels == 0 || cfg.window == 0 || cfg.per_class == 0) {
    throw ConfigError("synthetic windows need at least two classes and non-zero sizes");
  }
  const auto sig = signatures(cfg.n_classes, cfg.channels, cfg.seed);
  Rng rng(cfg.seed);
  std::vector<Window> out;
  out.reserve(cfg.n_classes * cfg.per_class);
  for (std::size_t k = 0; k < cfg.n_classes; ++k) {
    for (std::size_t i = 0; i < cfg.per_class; ++i) {
      Window w;
      w.label = static_cast<int>(k);
      w.source = "synthetic";
      w.start = i;
      w.values = Tensor({cfg.window, cfg.channels});
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t t = 0; t < cfg.window; ++t) {
        for (std::size_t c = 0; c < cfg.channels; ++c) {
          w.values[t * cfg.channels + c] = sample(sig[k], c, static_cast<double>(t), phase, cfg.noise, rng);
        }
      }
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::vector<SensorStream> synthetic_streams(const SyntheticCorpus& cfg) {
  if (cfg.n_classes < 2 || cfg.channels == 0 || cfg.users == 0 || cfg.bout_samples == 0 ||
      !(cfg.sample_rate > 0.0)) {
    throw ConfigError("synthetic corpus needs at least two classes and non-zero sizes");
  }
  const auto sig = signatures(cfg.n_classes, cfg.channels, cfg.seed);
  Rng rng(cfg.seed);
  std::vector<SensorStream> out;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    std::vector<std::size_t> order(cfg.n_classes);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));

    SensorStream s;
    s.source = "user" + std::to_string(u + 1);
    s.sample_rate = cfg.sample_rate;
    const std::size_t length = cfg.n_classes * cfg.bout_samples;
    s.channels = Tensor({length, cfg.channels});
    s.labels.reserve(length);
    std::size_t t = 0;
    for (const std::size_t k : order) {
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < cfg.bout_samples; ++i, ++t) {
        for (std::size_t c = 0; c < cfg.channels; ++c) {
          s.channels[t * cfg.channels + c] = sample(sig[k], c, static_cast<double>(t), phase, cfg.noise, rng);
        }
        s.labels.push_back(static_cast<int>(k));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

SyntheticCorpus corpus_for(Dataset d, std::uint64_t seed) {
  const auto& p = profile(d);
  SyntheticCorpus c;
  c.n_classes = p.classes;
  c.channels = p.channels;
  c.sample_rate = p.sample_rate_hz;
  c.seed = seed;
  // Long enough for a handful of windows per bout at the largest window.
  c.bout_samples = 3 * p.windows.back();
  return c;
}

void write_wisdm_text(std::ostream& out, std::span<const SensorStream> streams,
                      std::span<const std::string> class_names) {
  out << std::setprecision(10);
  for (std::size_t u = 0; u < streams.size(); ++u) {
    const auto& s = streams[u];
    if (s.channels.rank() != 2 || s.channels.extent(1) != 3) {
      throw DimensionError("WISDM records carry 3 channels, stream has " + to_string(s.channels.shape()));
    }
    const double period_ns = 1e9 / s.sample_rate;
    for (std::size_t t = 0; t < s.labels.size(); ++t) {
      const auto label = static_cast<std::size_t>(s.labels[t]);
      if (label >= class_names.size()) throw ValueError("label outside the class table");
      out << (u + 1) << ',' << class_names[label] << ','
          << static_cast<long long>(std::llround(static_cast<double>(t) * period_ns)) << ','
          << s.channels[t * 3] << ',' << s.channels[t * 3 + 1] << ',' << s.channels[t * 3 + 2] << ";\n";
    }
  }
}

}  // namespace wsense
