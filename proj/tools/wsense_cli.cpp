// wsense: parameter audits, segmentation statistics and training runs.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wsense/dataset.hpp"
#include "wsense/errors.hpp"
#include "wsense/experiment.hpp"
#include "wsense/golden.hpp"
#include "wsense/metrics.hpp"
#include "wsense/synthetic.hpp"

namespace fs = std::filesystem;
using namespace wsense;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string dataset = "wisdm";
  std::vector<std::string> archs;
  std::vector<std::size_t> windows;
  std::optional<double> overlap;
  std::size_t repeats = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::string data_dir;
  bool synthetic = false;
  std::size_t jobs = 1;
  double lr_factor = 0.1;
  std::size_t decimate = 1;
  std::optional<std::size_t> epochs;
};

Dataset dataset_of(const Options& o) {
  const auto d = parse_dataset(o.dataset);
  if (!d) throw UsageError("unknown dataset '" + o.dataset + "' (wisdm, pamap2)");
  return *d;
}

std::vector<Arch> archs_of(const Options& o) {
  if (o.archs.empty() || (o.archs.size() == 1 && o.archs[0] == "all")) {
    return {std::begin(kAllArchs), std::end(kAllArchs)};
  }
  std::vector<Arch> out;
  for (const auto& name : o.archs) {
    const auto a = parse_arch(name);
    if (!a) {
      throw UsageError("unknown architecture '" + name +
                       "' (cnn, cnn-se, cnn-wsense, convlstm, convlstm-se, convlstm-wsense)");
    }
    out.push_back(*a);
  }
  return out;
}

std::vector<std::size_t> windows_of(const Options& o, Dataset d, std::span<const Arch> archs) {
  std::vector<std::size_t> out = o.windows;
  if (out.empty()) out.assign(profile(d).windows.begin(), profile(d).windows.end());
  for (Arch a : archs) {
    for (std::size_t w : out) {
      if (w < min_window(a)) {
        throw UsageError("window " + std::to_string(w) + " is too short for " + std::string(to_string(a)) +
                         " (minimum " + std::to_string(min_window(a)) + ")");
      }
    }
  }
  return out;
}

ExperimentPlan plan_of(const Options& o) {
  const Dataset d = dataset_of(o);
  ExperimentPlan p = ExperimentPlan::defaults(d);
  p.archs = archs_of(o);
  p.windows = windows_of(o, d, p.archs);
  p.repeats = o.repeats;
  p.base_seed = o.seed;
  p.out_dir = o.out;
  p.synthetic = o.synthetic;
  p.data_dir = o.data_dir;
  p.overlap = o.overlap;
  p.lr_factor = o.lr_factor;
  p.decimate = o.decimate;
  p.epochs = o.epochs;
  p.jobs = o.jobs;
  return p;
}

int cmd_audit(const Options& o) {
  const Dataset d = dataset_of(o);
  const auto archs = archs_of(o);
  const auto windows = windows_of(o, d, archs);
  if (archs.size() == 1 && windows.size() == 1) {
    return audit_only(d, archs[0], windows[0], std::cout) ? 0 : kExitFailure;
  }
  bool all_ok = true;
  std::cout << std::left << std::setw(18) << "arch" << std::right << std::setw(8) << "window" << std::setw(12)
            << "total" << std::setw(12) << "golden" << "  result\n";
  for (Arch a : archs) {
    for (std::size_t w : windows) {
      const auto& prof = profile(d);
      const std::size_t total = audit_params(build_model(a, w, prof.channels, prof.classes, 0)).total;
      const auto g = golden_count(d, a, w);
      std::string golden = "-", verdict = "no golden";
      if (g) {
        golden = std::to_string(g->value) + (g->thousands ? "k" : "");
        const bool ok = golden_matches(*g, total);
        verdict = ok ? "PASS" : "FAIL";
        all_ok = all_ok && ok;
      }
      std::cout << std::left << std::setw(18) << to_string(a) << std::right << std::setw(8) << w
                << std::setw(12) << total << std::setw(12) << golden << "  " << verdict << '\n';
    }
  }
  return all_ok ? 0 : kExitFailure;
}

LoadResult corpus_of(const Options& o, Dataset d) {
  if (o.synthetic) {
    LoadResult r;
    r.streams = synthetic_streams(corpus_for(d, o.seed));
    if (d == Dataset::wisdm) {
      for (auto n : kWisdmClasses) r.class_names.emplace_back(n);
    } else {
      for (auto n : kPamap2Classes) r.class_names.emplace_back(n);
    }
    for (const auto& s : r.streams) r.rows += s.labels.size();
    return r;
  }
  fs::path root = o.data_dir;
  if (root.empty()) {
    if (const char* env = std::getenv("WSENSE_DATA_DIR")) root = env;
  }
  const auto where = locate_dataset(d, root);
  if (!where) {
    throw ConfigError(std::string(profile(d).name) + " data not found under '" + root.string() +
                      "'; set WSENSE_DATA_DIR or use --synthetic");
  }
  return d == Dataset::wisdm ? load_wisdm(*where) : load_pamap2(*where, Pamap2Options{o.decimate, 1.0});
}

int cmd_segment_stats(const Options& o) {
  const Dataset d = dataset_of(o);
  const auto windows = windows_of(o, d, {});
  const LoadResult data = corpus_of(o, d);
  const double frac = o.overlap.value_or(profile(d).overlap);
  std::cout << profile(d).name << (o.synthetic ? " (synthetic)" : "") << ": " << data.streams.size()
            << " streams, " << data.rows << " samples, " << data.malformed << " malformed, " << data.dropped
            << " dropped\n";
  std::cout << std::setw(8) << "window" << std::setw(9) << "overlap" << std::setw(11) << "seconds"
            << std::setw(10) << "windows";
  for (const auto& n : data.class_names) std::cout << "  " << n;
  std::cout << '\n';
  for (std::size_t n : windows) {
    const double dt = 1.0 / (data.streams.empty() ? profile(d).sample_rate_hz : data.streams.front().sample_rate);
    const auto cfg = SegmentationConfig::from_fraction(n, frac, dt);
    const auto segs = segment_streams(data.streams, cfg);
    std::cout << std::setw(8) << n << std::setw(9) << cfg.overlap << std::setw(11) << std::fixed
              << std::setprecision(2) << cfg.duration() << std::defaultfloat << std::setw(10) << segs.size();
    for (std::size_t c : class_histogram(segs, data.class_names.size())) std::cout << "  " << c;
    std::cout << '\n';
    if (!o.out.empty()) {
      const fs::path dir = fs::path(o.out) / ("w" + std::to_string(n));
      fs::create_directories(dir);
      save_split(make_split(segs, data.class_names, 0.2, o.seed), dir);
    }
  }
  return 0;
}

void print_report(const RunReport& r) {
  if (!r.ok) {
    std::cout << r.cell_id << ": FAILED (" << r.error << ")\n";
    return;
  }
  std::cout << r.cell_id << ": test accuracy " << std::fixed << std::setprecision(2) << 100.0 * r.test_accuracy
            << "%, " << r.epochs_run << " epochs (best " << r.best_epoch << "), " << r.params_total
            << " params\n"
            << std::defaultfloat;
  write_classification_report(std::cout, compute_metrics(r.confusion), r.class_names);
  write_confusion_text(std::cout, r.confusion, r.class_names);
}

int cmd_train(Options o) {
  if (o.archs.size() != 1 || o.archs[0] == "all") throw UsageError("train needs exactly one --arch");
  if (o.windows.size() != 1) throw UsageError("train needs exactly one --window");
  if (o.out.empty()) throw UsageError("train needs --out");
  o.repeats = 1;
  const PlanResult res = run_plan(plan_of(o), &std::cerr);
  print_report(res.reports.front());
  return res.reports.front().ok ? 0 : kExitFailure;
}

int cmd_plan(const Options& o) {
  if (o.out.empty()) throw UsageError("plan needs --out");
  const PlanResult res = run_plan(plan_of(o), &std::cerr);
  std::size_t failed = 0;
  for (const auto& r : res.reports) failed += !r.ok;
  write_summary_csv(std::cout, res.summary);
  std::cerr << res.reports.size() << " cells, " << res.resumed << " resumed, " << failed << " failed\n";
  return failed ? kExitFailure : 0;
}

int cmd_report(const Options& o) {
  if (o.out.empty()) throw UsageError("report needs --out (a plan directory)");
  const auto reports = collect_reports(o.out);
  if (reports.empty()) throw IoError("no report.json below " + o.out);
  for (const auto& r : reports) {
    std::cout << r.cell_id << ": ";
    if (r.ok) {
      std::cout << std::fixed << std::setprecision(2) << 100.0 * r.test_accuracy << "%" << std::defaultfloat;
    } else {
      std::cout << "FAILED (" << r.error << ")";
    }
    std::cout << '\n';
  }
  std::cout << '\n';
  write_summary_csv(std::cout, summarize(reports));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WSense activity-recognition toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--dataset", o.dataset, "wisdm or pamap2")->capture_default_str();
    sub->add_option("--arch", o.archs, "architecture(s), comma separated, or 'all'")->delimiter(',');
    sub->add_option("--window", o.windows, "window size(s) in samples, comma separated")->delimiter(',');
    sub->add_option("--seed", o.seed, "base seed")->capture_default_str();
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--overlap", o.overlap, "overlap as a fraction of the window")->check(CLI::Range(0.0, 1.0));
    sub->add_flag("--synthetic", o.synthetic, "use the seeded synthetic corpus instead of real data");
    sub->add_option("--data-dir", o.data_dir, "dataset root (default: $WSENSE_DATA_DIR)");
    sub->add_option("--decimate", o.decimate, "keep every n-th PAMAP2 sample")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--lr-factor", o.lr_factor, "plateau learning-rate factor")->capture_default_str();
    sub->add_option("--epochs", o.epochs, "maximum epochs (default 100)")->check(CLI::PositiveNumber);
    sub->add_option("--jobs", o.jobs, "cells run in parallel")->check(CLI::PositiveNumber);
  };

  auto* audit = app.add_subcommand("audit", "parameter breakdown and golden comparison (no data needed)");
  add_common(audit);
  auto* seg = app.add_subcommand("segment-stats", "window counts per window size and class");
  add_common(seg);
  add_data(seg);
  auto* train = app.add_subcommand("train", "train and evaluate one cell");
  add_common(train);
  add_data(train);
  add_training(train);
  auto* plan = app.add_subcommand("plan", "run an experiment matrix (resumable)");
  add_common(plan);
  add_data(plan);
  add_training(plan);
  plan->add_option("--repeats", o.repeats, "runs per (arch, window)")->check(CLI::PositiveNumber)->capture_default_str();
  auto* report = app.add_subcommand("report", "summarise the reports of a plan directory");
  report->add_option("--out", o.out, "plan directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*audit) return cmd_audit(o);
    if (*seg) return cmd_segment_stats(o);
    if (*train) return cmd_train(o);
    if (*plan) return cmd_plan(o);
    if (*report) return cmd_report(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
