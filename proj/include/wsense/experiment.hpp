#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsense/metrics.hpp"
#include "wsense/model.hpp"
#include "wsense/profile.hpp"

namespace wsense {

struct ExperimentPlan {
  Dataset dataset = Dataset::wisdm;
  std::vector<Arch> archs;
  std::vector<std::size_t> windows;
  std::size_t repeats = 10;
  std::uint64_t base_seed = 0;
  std::filesystem::path out_dir;

  bool synthetic = false;
  std::filesystem::path data_dir;        // empty: WSENSE_DATA_DIR
  std::optional<double> overlap;         // fraction of the window; default from the profile
  double lr_factor = 0.1;
  std::size_t decimate = 1;              // PAMAP2 only
  std::optional<std::size_t> epochs;     // default from TrainConfig
  double test_fraction = 0.2;
  std::size_t jobs = 1;
  BuildOptions build;

  /// All six architectures over the profile's eight windows, 10 repeats.
  static ExperimentPlan defaults(Dataset d);

  /// Throws ConfigError for an empty plan, a window below an architecture's
  /// minimum, zero repeats or jobs.
  void validate() const;

  std::size_t total_cells() const { return archs.size() * windows.size() * repeats; }
};

struct PlanCell {
  std::size_t index = 0;  // arch-major, then window, then repeat
  Arch arch = Arch::cnn;
  std::size_t window = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;  // base_seed + index

  /// e.g. "cnn-wsense/w120/r03"; also the cell's directory below out_dir.
  std::string id() const;
};

std::vector<PlanCell> enumerate_cells(const ExperimentPlan& plan);

struct RunReport {
  std::string cell_id;
  std::size_t cell_index = 0;
  Dataset dataset = Dataset::wisdm;
  Arch arch = Arch::cnn;
  std::size_t window = 0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;

  bool ok = false;
  std::string error;  // set when !ok

  std::size_t params_total = 0;
  std::size_t params_trainable = 0;
  std::optional<std::size_t> golden;  // expected total where the tables give one
  bool golden_in_thousands = false;   // golden is floor(total / 1000)
  bool audit_pass = true;

  std::size_t train_windows = 0;
  std::size_t test_windows = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double final_lr = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;  // fraction in [0, 1]
  double macro_f1 = 0.0;
  std::vector<std::string> class_names;
  ConfusionMatrix confusion;
  double wall_seconds = 0.0;
  std::string history_file;
};

std::string to_json_text(const RunReport& r);
RunReport report_from_json_text(const std::string& text);
RunReport load_report(const std::filesystem::path& path);

struct WindowAggregate {
  std::size_t window = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double average = 0.0;  // percent, arithmetic mean over completed cells
  double highest = 0.0;  // percent
  std::optional<std::size_t> params;
};

struct ArchAggregate {
  Arch arch = Arch::cnn;
  std::vector<WindowAggregate> windows;
  /// Over the per-window averages, when at least two windows completed.
  std::optional<ConfidenceInterval> ci;
  std::size_t failed = 0;
};

struct PlanSummary {
  Dataset dataset = Dataset::wisdm;
  std::vector<std::size_t> windows;
  std::vector<ArchAggregate> archs;
};

PlanSummary summarize(std::span<const RunReport> reports);

/// Per-window average/highest accuracy per architecture, then the mean and
/// 95% half-widths of each column, then a parameter table.
void write_summary_csv(std::ostream& out, const PlanSummary& summary);

struct PlanResult {
  std::vector<RunReport> reports;  // cell order
  PlanSummary summary;
  std::size_t resumed = 0;  // cells skipped because their report already existed
};

/// Where a dataset lives under `root`, if anywhere.
std::optional<std::filesystem::path> locate_dataset(Dataset d, const std::filesystem::path& root);

/// Runs every cell not already reported in out_dir, writing report.json,
/// history.csv and confusion.csv per cell, plan.json and summary.csv per
/// plan. A cell whose audit disagrees with the golden tables or whose
/// training fails is reported as failed; the plan carries on. Throws
/// ConfigError when real data is requested but cannot be found, or when
/// out_dir holds a different plan.
PlanResult run_plan(const ExperimentPlan& plan, std::ostream* log = nullptr);

/// Reads every report.json below `dir`, in cell order.
std::vector<RunReport> collect_reports(const std::filesystem::path& dir);

/// Per-layer breakdown plus the golden comparison. Returns false on a
/// mismatch. Cells without a golden value pass.
bool audit_only(Dataset d, Arch arch, std::size_t window, std::ostream& out);

}  // namespace wsense
