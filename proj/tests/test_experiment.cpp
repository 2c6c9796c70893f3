#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "wsense/errors.hpp"
#include "wsense/experiment.hpp"

using namespace wsense;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("wsense_exp_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentPlan small_plan(const fs::path& out) {
  ExperimentPlan p;
  p.dataset = Dataset::wisdm;
  p.archs = {Arch::cnn, Arch::cnn_wsense};
  p.windows = {40, 80};
  p.repeats = 2;
  p.base_seed = 100;
  p.out_dir = out;
  p.synthetic = true;
  p.epochs = 2;
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WSENSE_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Plan, CellCountsAndSeeds) {
  EXPECT_EQ(ExperimentPlan::defaults(Dataset::wisdm).total_cells(), 480u);
  EXPECT_EQ(ExperimentPlan::defaults(Dataset::pamap2).total_cells(), 480u);
  ExperimentPlan one = ExperimentPlan::defaults(Dataset::wisdm);
  one.archs = {Arch::cnn_wsense};
  EXPECT_EQ(one.total_cells(), 80u);

  ExperimentPlan p = small_plan("unused");
  const auto cells = enumerate_cells(p);
  ASSERT_EQ(cells.size(), 8u);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    EXPECT_EQ(cells[i].index, i);
    EXPECT_EQ(cells[i].seed, 100 + i);
  }
  EXPECT_EQ(cells[0].id(), "cnn/w40/r00");
  EXPECT_EQ(cells[3].id(), "cnn/w80/r01");
  EXPECT_EQ(cells[4].arch, Arch::cnn_wsense);
}

TEST(Plan, Validation) {
  ExperimentPlan p = small_plan("unused");
  p.windows = {8};
  EXPECT_THROW(p.validate(), ConfigError);
  p = small_plan("unused");
  p.archs = {Arch::convlstm};
  p.windows = {31};
  EXPECT_THROW(p.validate(), ConfigError);
  p = small_plan("unused");
  p.repeats = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Plan, MissingDataIsAStartupError) {
  ExperimentPlan p = small_plan(fresh_dir("missing"));
  p.synthetic = false;
  p.data_dir = fs::temp_directory_path() / "wsense_no_such_data";
  EXPECT_THROW(run_plan(p), ConfigError);
  EXPECT_FALSE(fs::exists(p.out_dir / "plan.json"));
}

TEST(Plan, RunResumeAndSummary) {
  const fs::path out = fresh_dir("small");
  const ExperimentPlan p = small_plan(out);
  const PlanResult first = run_plan(p);
  ASSERT_EQ(first.reports.size(), 8u);
  EXPECT_EQ(first.resumed, 0u);
  std::map<std::string, std::string> bytes;
  for (const auto& r : first.reports) {
    EXPECT_TRUE(r.ok) << r.cell_id << ": " << r.error;
    EXPECT_TRUE(r.audit_pass);
    EXPECT_LE(r.epochs_run, 2u);
    const fs::path dir = out / r.cell_id;
    EXPECT_TRUE(fs::exists(dir / "history.csv"));
    EXPECT_TRUE(fs::exists(dir / "confusion.csv"));
    bytes[r.cell_id] = slurp(dir / "report.json");
  }
  EXPECT_TRUE(fs::exists(out / "summary.csv"));

  // Second run does nothing and leaves every report byte-identical.
  const PlanResult second = run_plan(p);
  EXPECT_EQ(second.resumed, 8u);
  for (const auto& [id, b] : bytes) EXPECT_EQ(slurp(out / id / "report.json"), b);

  // A deleted report is recomputed identically from its seed.
  const std::string victim = first.reports[5].cell_id;
  fs::remove(out / victim / "report.json");
  const PlanResult third = run_plan(p);
  EXPECT_EQ(third.resumed, 7u);
  const RunReport a = load_report(out / victim / "report.json");
  EXPECT_EQ(a.test_accuracy, first.reports[5].test_accuracy);
  EXPECT_EQ(a.best_val_loss, first.reports[5].best_val_loss);

  // Averages are exact means over repeats.
  const auto collected = collect_reports(out);
  ASSERT_EQ(collected.size(), 8u);
  const PlanSummary s = summarize(collected);
  ASSERT_EQ(s.archs.size(), 2u);
  for (const auto& arch : s.archs) {
    for (const auto& w : arch.windows) {
      double sum = 0, best = 0;
      for (const auto& r : collected) {
        if (r.arch != arch.arch || r.window != w.window) continue;
        sum += 100.0 * r.test_accuracy;
        best = std::max(best, 100.0 * r.test_accuracy);
      }
      EXPECT_DOUBLE_EQ(w.average, sum / 2.0);
      EXPECT_DOUBLE_EQ(w.highest, best);
      EXPECT_EQ(w.completed, 2u);
    }
    ASSERT_TRUE(arch.ci.has_value());
  }
  EXPECT_EQ(s.archs[1].windows[0].params, std::optional<std::size_t>(236678));
}

TEST(Plan, DifferentPlanInSameDirectoryIsRejected) {
  const fs::path out = fresh_dir("clash");
  ExperimentPlan p = small_plan(out);
  p.archs = {Arch::cnn};
  p.windows = {40};
  p.repeats = 1;
  p.epochs = 1;
  run_plan(p);
  p.base_seed = 7;
  EXPECT_THROW(run_plan(p), ConfigError);
}

TEST(Plan, FailedCellDoesNotAbort) {
  const fs::path out = fresh_dir("failed");
  ExperimentPlan p = small_plan(out);
  p.archs = {Arch::cnn_se, Arch::cnn_wsense};
  p.windows = {80};
  p.repeats = 1;
  p.epochs = 1;
  p.build.se_reduction = 4;  // the SE block no longer matches the published count
  const PlanResult r = run_plan(p);
  ASSERT_EQ(r.reports.size(), 2u);
  EXPECT_FALSE(r.reports[0].ok);
  EXPECT_FALSE(r.reports[0].audit_pass);
  EXPECT_FALSE(r.reports[0].error.empty());
  EXPECT_TRUE(r.reports[1].ok);
  EXPECT_EQ(r.summary.archs[0].failed, 1u);
  EXPECT_NE(slurp(out / "summary.csv").find("failed_cells"), std::string::npos);
}

TEST(Report, JsonRoundTrip) {
  RunReport r;
  r.cell_id = "convlstm-se/w250/r09";
  r.cell_index = 211;
  r.dataset = Dataset::pamap2;
  r.arch = Arch::convlstm_se;
  r.window = 250;
  r.repeat = 9;
  r.seed = 211;
  r.ok = true;
  r.params_total = 1166000;
  r.golden = 1166;
  r.golden_in_thousands = true;
  r.test_accuracy = 0.9653;
  r.best_val_loss = 0.123456789012345;
  r.class_names = {"a", "b"};
  r.confusion = ConfusionMatrix(2);
  r.confusion.at(1, 0) = 3;
  const RunReport back = report_from_json_text(to_json_text(r));
  EXPECT_EQ(to_json_text(back), to_json_text(r));
  EXPECT_EQ(back.best_val_loss, r.best_val_loss);
  EXPECT_EQ(back.confusion.at(1, 0), 3u);
  EXPECT_THROW(report_from_json_text("{not json"), FormatError);
  EXPECT_THROW(report_from_json_text("{}"), FormatError);
}

TEST(Audit, OnlyModeReportsVerdict) {
  std::ostringstream out;
  EXPECT_TRUE(audit_only(Dataset::wisdm, Arch::cnn_wsense, 120, out));
  EXPECT_NE(out.str().find("236678"), std::string::npos);
  EXPECT_NE(out.str().find("PASS"), std::string::npos);
  std::ostringstream none;
  EXPECT_TRUE(audit_only(Dataset::wisdm, Arch::cnn, 100, none));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("audit --dataset wisdm --arch cnn-wsense --window 80"), 0);
  EXPECT_EQ(run_cli("audit --dataset nope"), 2);
  EXPECT_EQ(run_cli("train --dataset wisdm --arch cnn --window 80 --data-dir /nonexistent --out " +
                    (fs::temp_directory_path() / "wsense_cli_nodata").string()),
            2);
  EXPECT_EQ(run_cli("audit --dataset wisdm --arch cnn --window 8"), 2);
}
