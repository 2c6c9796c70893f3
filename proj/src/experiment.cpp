#include "wsense/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "wsense/dataset.hpp"
#include "wsense/errors.hpp"
#include "wsense/golden.hpp"
#include "wsense/synthetic.hpp"
#include "wsense/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wsense {

ExperimentPlan ExperimentPlan::defaults(Dataset d) {
  ExperimentPlan p;
  p.dataset = d;
  p.archs.assign(std::begin(kAllArchs), std::end(kAllArchs));
  const auto& w = profile(d).windows;
  p.windows.assign(w.begin(), w.end());
  return p;
}

void ExperimentPlan::validate() const {
  if (archs.empty() || windows.empty()) throw ConfigError("plan needs at least one architecture and window");
  if (repeats == 0) throw ConfigError("repeats must be positive");
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (decimate == 0) throw ConfigError("decimate must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  if (overlap && !(*overlap > 0.0 && *overlap < 1.0)) throw ConfigError("overlap must lie in (0, 1)");
  for (Arch a : archs) {
    for (std::size_t w : windows) {
      if (w < min_window(a)) {
        throw ConfigError("window " + std::to_string(w) + " is below the minimum " +
                          std::to_string(min_window(a)) + " for " + std::string(to_string(a)));
      }
    }
  }
}

std::string PlanCell::id() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "/w%zu/r%02zu", window, repeat);
  return std::string(to_string(arch)) + buf;
}

std::vector<PlanCell> enumerate_cells(const ExperimentPlan& plan) {
  std::vector<PlanCell> cells;
  cells.reserve(plan.total_cells());
  for (Arch a : plan.archs) {
    for (std::size_t w : plan.windows) {
      for (std::size_t r = 0; r < plan.repeats; ++r) {
        PlanCell c;
        c.index = cells.size();
        c.arch = a;
        c.window = w;
        c.repeat = r;
        c.seed = plan.base_seed + c.index;
        cells.push_back(c);
      }
    }
  }
  return cells;
}

// --- report serialisation -------------------------------------------------

namespace {

json report_json(const RunReport& r) {
  json j;
  j["cell_id"] = r.cell_id;
  j["cell_index"] = r.cell_index;
  j["dataset"] = std::string(profile(r.dataset).name);
  j["arch"] = std::string(to_string(r.arch));
  j["window"] = r.window;
  j["repeat"] = r.repeat;
  j["seed"] = r.seed;
  j["ok"] = r.ok;
  j["error"] = r.error;
  j["audit"] = {{"total", r.params_total},
                {"trainable", r.params_trainable},
                {"golden", r.golden ? json(*r.golden) : json(nullptr)},
                {"golden_in_thousands", r.golden_in_thousands},
                {"pass", r.audit_pass}};
  j["train_windows"] = r.train_windows;
  j["test_windows"] = r.test_windows;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["best_val_loss"] = r.best_val_loss;
  j["final_lr"] = r.final_lr;
  j["test_loss"] = r.test_loss;
  j["test_accuracy"] = r.test_accuracy;
  j["macro_f1"] = r.macro_f1;
  j["class_names"] = r.class_names;
  j["confusion"] = {{"n_classes", r.confusion.n_classes}, {"counts", r.confusion.counts}};
  j["wall_seconds"] = r.wall_seconds;
  j["history_file"] = r.history_file;
  return j;
}

}  // namespace

std::string to_json_text(const RunReport& r) { return report_json(r).dump(2) + "\n"; }

RunReport report_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    RunReport r;
    r.cell_id = j.at("cell_id").get<std::string>();
    r.cell_index = j.at("cell_index").get<std::size_t>();
    const auto d = parse_dataset(j.at("dataset").get<std::string>());
    const auto a = parse_arch(j.at("arch").get<std::string>());
    if (!d || !a) throw FormatError("report names an unknown dataset or architecture");
    r.dataset = *d;
    r.arch = *a;
    r.window = j.at("window").get<std::size_t>();
    r.repeat = j.at("repeat").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("ok").get<bool>();
    r.error = j.at("error").get<std::string>();
    const auto& au = j.at("audit");
    r.params_total = au.at("total").get<std::size_t>();
    r.params_trainable = au.at("trainable").get<std::size_t>();
    if (!au.at("golden").is_null()) r.golden = au.at("golden").get<std::size_t>();
    r.golden_in_thousands = au.at("golden_in_thousands").get<bool>();
    r.audit_pass = au.at("pass").get<bool>();
    r.train_windows = j.at("train_windows").get<std::size_t>();
    r.test_windows = j.at("test_windows").get<std::size_t>();
    r.epochs_run = j.at("epochs_run").get<std::size_t>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.best_val_loss = j.at("best_val_loss").get<double>();
    r.final_lr = j.at("final_lr").get<double>();
    r.test_loss = j.at("test_loss").get<double>();
    r.test_accuracy = j.at("test_accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.confusion = ConfusionMatrix(j.at("confusion").at("n_classes").get<std::size_t>());
    r.confusion.counts = j.at("confusion").at("counts").get<std::vector<std::size_t>>();
    if (r.confusion.counts.size() != r.confusion.n_classes * r.confusion.n_classes) {
      throw FormatError("confusion counts do not form a square matrix");
    }
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.history_file = j.at("history_file").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

RunReport load_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return report_from_json_text(text.str());
}

// --- aggregation ------------------------------------------------------------

PlanSummary summarize(std::span<const RunReport> reports) {
  PlanSummary s;
  if (reports.empty()) return s;
  s.dataset = reports.front().dataset;

  std::vector<const RunReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->cell_index < b->cell_index; });

  for (auto* r : sorted) {
    if (std::find(s.windows.begin(), s.windows.end(), r->window) == s.windows.end()) {
      s.windows.push_back(r->window);
    }
    if (std::none_of(s.archs.begin(), s.archs.end(), [&](auto& a) { return a.arch == r->arch; })) {
      s.archs.push_back({r->arch, {}, std::nullopt, 0});
    }
  }
  std::sort(s.windows.begin(), s.windows.end());

  for (auto& a : s.archs) {
    std::vector<double> averages;
    for (std::size_t w : s.windows) {
      WindowAggregate agg;
      agg.window = w;
      double sum = 0.0;
      for (auto* r : sorted) {
        if (r->arch != a.arch || r->window != w) continue;
        agg.params = r->params_total;
        if (!r->ok) {
          ++agg.failed;
          continue;
        }
        const double pct = 100.0 * r->test_accuracy;
        sum += pct;
        agg.highest = agg.completed == 0 ? pct : std::max(agg.highest, pct);
        ++agg.completed;
      }
      if (agg.completed > 0) {
        agg.average = sum / static_cast<double>(agg.completed);
        averages.push_back(agg.average);
      }
      a.failed += agg.failed;
      a.windows.push_back(agg);
    }
    if (averages.size() >= 2) a.ci = confidence_interval(averages);
  }
  return s;
}

void write_summary_csv(std::ostream& out, const PlanSummary& s) {
  auto num = [](double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << v;
    return o.str();
  };
  out << "window";
  for (const auto& a : s.archs) out << ',' << to_string(a.arch) << "_average," << to_string(a.arch) << "_highest";
  out << '\n';
  for (std::size_t i = 0; i < s.windows.size(); ++i) {
    out << s.windows[i];
    for (const auto& a : s.archs) {
      const auto& w = a.windows[i];
      if (w.completed) {
        out << ',' << num(w.average) << ',' << num(w.highest);
      } else {
        out << ",,";
      }
    }
    out << '\n';
  }
  // Mean over windows of both columns, then the half-widths of the averages.
  out << "mean";
  for (const auto& a : s.archs) {
    double avg = 0.0, high = 0.0;
    std::size_t n = 0;
    for (const auto& w : a.windows) {
      if (!w.completed) continue;
      avg += w.average;
      high += w.highest;
      ++n;
    }
    if (n) {
      out << ',' << num(avg / static_cast<double>(n)) << ',' << num(high / static_cast<double>(n));
    } else {
      out << ",,";
    }
  }
  out << "\nci95_z";
  for (const auto& a : s.archs) out << ',' << (a.ci ? num(a.ci->half_width_z) : "") << ',';
  out << "\nci95_t";
  for (const auto& a : s.archs) out << ',' << (a.ci ? num(a.ci->half_width_t) : "") << ',';
  out << "\nfailed_cells";
  for (const auto& a : s.archs) out << ',' << a.failed << ',';
  out << "\n\nwindow";
  for (const auto& a : s.archs) out << ',' << to_string(a.arch) << "_params";
  out << '\n';
  for (std::size_t i = 0; i < s.windows.size(); ++i) {
    out << s.windows[i];
    for (const auto& a : s.archs) {
      out << ',';
      if (a.windows[i].params) out << *a.windows[i].params;
    }
    out << '\n';
  }
}

// --- running ----------------------------------------------------------------

std::optional<fs::path> locate_dataset(Dataset d, const fs::path& root) {
  if (root.empty()) return std::nullopt;
  std::vector<fs::path> candidates;
  if (d == Dataset::wisdm) {
    for (const char* sub : {"", "wisdm", "WISDM_ar_v1.1", "wisdm/WISDM_ar_v1.1"}) {
      candidates.push_back(root / sub / "WISDM_ar_v1.1_raw.txt");
    }
  } else {
    for (const char* sub : {"PAMAP2_Dataset/Protocol", "pamap2/PAMAP2_Dataset/Protocol", "pamap2/Protocol",
                            "Protocol"}) {
      candidates.push_back(root / sub);
    }
  }
  for (const auto& c : candidates) {
    std::error_code ec;
    if (fs::exists(c, ec)) return c;
  }
  return std::nullopt;
}

namespace {

struct Corpus {
  std::vector<SensorStream> streams;
  std::vector<std::string> class_names;
};

// Resolved before any cell runs so a missing corpus is a startup error.
fs::path require_data(const ExperimentPlan& plan) {
  fs::path root = plan.data_dir;
  if (root.empty()) {
    if (const char* env = std::getenv("WSENSE_DATA_DIR")) root = env;
  }
  const auto where = locate_dataset(plan.dataset, root);
  if (!where) {
    throw ConfigError(std::string(profile(plan.dataset).name) + " data not found under '" + root.string() +
                      "'; set WSENSE_DATA_DIR, pass a data directory, or use --synthetic");
  }
  return *where;
}

Corpus load_corpus(const ExperimentPlan& plan, const fs::path& where) {
  Corpus c;
  if (plan.synthetic) {
    c.streams = synthetic_streams(corpus_for(plan.dataset, plan.base_seed));
    if (plan.dataset == Dataset::wisdm) {
      for (auto n : kWisdmClasses) c.class_names.emplace_back(n);
    } else {
      for (auto n : kPamap2Classes) c.class_names.emplace_back(n);
    }
    return c;
  }
  LoadResult r = plan.dataset == Dataset::wisdm ? load_wisdm(where)
                                                : load_pamap2(where, Pamap2Options{plan.decimate, 1.0});
  c.streams = std::move(r.streams);
  c.class_names = std::move(r.class_names);
  return c;
}

json plan_json(const ExperimentPlan& p) {
  json archs = json::array();
  for (Arch a : p.archs) archs.push_back(std::string(to_string(a)));
  json j;
  j["dataset"] = std::string(profile(p.dataset).name);
  j["archs"] = archs;
  j["windows"] = p.windows;
  j["repeats"] = p.repeats;
  j["base_seed"] = p.base_seed;
  j["synthetic"] = p.synthetic;
  j["overlap"] = p.overlap ? json(*p.overlap) : json(nullptr);
  j["lr_factor"] = p.lr_factor;
  j["decimate"] = p.decimate;
  j["epochs"] = p.epochs ? json(*p.epochs) : json(nullptr);
  j["test_fraction"] = p.test_fraction;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

RunReport run_cell(const ExperimentPlan& plan, const PlanCell& cell, const std::vector<Window>& windows,
                   const std::vector<std::string>& class_names, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport r;
  r.cell_id = cell.id();
  r.cell_index = cell.index;
  r.dataset = plan.dataset;
  r.arch = cell.arch;
  r.window = cell.window;
  r.repeat = cell.repeat;
  r.seed = cell.seed;
  r.class_names = class_names;
  const auto& prof = profile(plan.dataset);

  try {
    ModelSpec model = build_model(cell.arch, cell.window, prof.channels, class_names.size(), cell.seed, plan.build);
    const ParamAudit audit = audit_params(model);
    r.params_total = audit.total;
    r.params_trainable = audit.trainable;
    if (const auto g = golden_count(plan.dataset, cell.arch, cell.window)) {
      r.golden = g->value;
      r.golden_in_thousands = g->thousands;
      r.audit_pass = golden_matches(*g, audit.total);
    }
    if (!r.audit_pass) {
      throw StateError("parameter audit " + std::to_string(audit.total) + " disagrees with golden " +
                       std::to_string(*r.golden) + (r.golden_in_thousands ? "k" : ""));
    }

    DatasetSplit split = make_split(windows, class_names, plan.test_fraction, cell.seed);
    r.train_windows = split.train.size();
    r.test_windows = split.test.size();

    TrainConfig cfg = TrainConfig::for_dataset(plan.dataset);
    cfg.seed = cell.seed;
    cfg.lr_factor = plan.lr_factor;
    if (plan.epochs) cfg.epochs = *plan.epochs;
    const TrainState state = fit(model, split, cfg);
    r.epochs_run = state.epoch;
    r.best_epoch = state.best_epoch;
    r.best_val_loss = state.best_val_loss;
    r.final_lr = state.lr;

    {
      std::ostringstream h;
      write_history_csv(h, state.history);
      write_text(dir / "history.csv", h.str());
      r.history_file = "history.csv";
    }

    const EvalResult ev = evaluate(model, split.test, cfg.eval_batch_size);
    std::vector<int> truth;
    for (const auto& w : split.test) truth.push_back(w.label);
    r.confusion = confusion(truth, ev.predictions, class_names.size());
    r.test_loss = ev.loss;
    r.test_accuracy = ev.accuracy;
    r.macro_f1 = compute_metrics(r.confusion).macro_f1;
    std::ostringstream cm;
    write_confusion_csv(cm, r.confusion, class_names);
    write_text(dir / "confusion.csv", cm.str());
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

PlanResult run_plan(const ExperimentPlan& plan, std::ostream* log) {
  plan.validate();
  if (plan.out_dir.empty()) throw ConfigError("plan needs an output directory");
  const fs::path data = plan.synthetic ? fs::path{} : require_data(plan);
  fs::create_directories(plan.out_dir);

  const fs::path manifest = plan.out_dir / "plan.json";
  const std::string plan_text = plan_json(plan).dump(2) + "\n";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::ostringstream old;
    old << in.rdbuf();
    if (old.str() != plan_text) {
      throw ConfigError(plan.out_dir.string() + " holds a different plan; use a fresh output directory");
    }
  } else {
    write_text(manifest, plan_text);
  }

  const auto cells = enumerate_cells(plan);
  PlanResult result;
  result.reports.resize(cells.size());
  std::vector<const PlanCell*> pending;
  for (const auto& c : cells) {
    const fs::path report = plan.out_dir / c.id() / "report.json";
    if (fs::exists(report)) {
      result.reports[c.index] = load_report(report);
      ++result.resumed;
    } else {
      pending.push_back(&c);
    }
  }

  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    *log << line << std::endl;
  };
  say("plan: " + std::to_string(cells.size()) + " cells, " + std::to_string(result.resumed) +
      " already reported");

  if (!pending.empty()) {
    const Corpus corpus = load_corpus(plan, data);
    const double frac = plan.overlap.value_or(profile(plan.dataset).overlap);
    const double dt = 1.0 / (corpus.streams.empty() ? profile(plan.dataset).sample_rate_hz
                                                    : corpus.streams.front().sample_rate);
    std::map<std::size_t, std::vector<Window>> by_window;
    for (const PlanCell* c : pending) {
      if (!by_window.count(c->window)) {
        by_window[c->window] = segment_streams(corpus.streams, SegmentationConfig::from_fraction(c->window, frac, dt));
      }
    }

    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    auto worker = [&] {
      for (std::size_t i = next++; i < pending.size(); i = next++) {
        const PlanCell& c = *pending[i];
        const fs::path dir = plan.out_dir / c.id();
        fs::create_directories(dir);
        RunReport r = run_cell(plan, c, by_window.at(c.window), corpus.class_names, dir);
        write_text(dir / "report.json", to_json_text(r));
        std::ostringstream line;
        line << c.id() << ": ";
        if (r.ok) {
          line << std::fixed << std::setprecision(2) << 100.0 * r.test_accuracy << "% after " << r.epochs_run
               << " epochs, " << r.params_total << " params";
        } else {
          line << "FAILED (" << r.error << ")";
        }
        say(line.str());
        std::lock_guard lock(io_mutex);
        result.reports[c.index] = std::move(r);
      }
    };
    const std::size_t n = std::min(plan.jobs, pending.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  result.summary = summarize(result.reports);
  std::ostringstream csv;
  write_summary_csv(csv, result.summary);
  write_text(plan.out_dir / "summary.csv", csv.str());
  return result;
}

std::vector<RunReport> collect_reports(const fs::path& dir) {
  std::vector<RunReport> out;
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "report.json") out.push_back(load_report(e.path()));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.cell_index < b.cell_index; });
  return out;
}

bool audit_only(Dataset d, Arch arch, std::size_t window, std::ostream& out) {
  const auto& prof = profile(d);
  const ModelSpec m = build_model(arch, window, prof.channels, prof.classes, 0);
  const ParamAudit a = audit_params(m);
  out << prof.name << ' ' << to_string(arch) << " window " << window << '\n';
  out << std::left << std::setw(28) << "layer" << std::setw(16) << "kind" << std::setw(18) << "output"
      << std::right << std::setw(12) << "params" << '\n';
  for (const auto& l : a.layers) {
    out << std::left << std::setw(28) << l.name << std::setw(16) << to_string(l.kind) << std::setw(18)
        << to_string(l.output_shape) << std::right << std::setw(12) << l.count.total << '\n';
  }
  out << "total " << a.total << " (trainable " << a.trainable << ", non-trainable " << a.total - a.trainable
      << ")\n";
  const auto g = golden_count(d, arch, window);
  if (!g) {
    out << "golden: none published for this cell\n";
    return true;
  }
  const bool ok = golden_matches(*g, a.total);
  if (g->thousands) {
    out << "golden: " << g->value << "k (published in truncated millions) ";
  } else {
    out << "golden: " << g->value << ' ';
  }
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok;
}

}  // namespace wsense
