#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace wsense {

/// counts[true][predicted].
struct ConfusionMatrix {
  std::size_t n_classes = 0;
  std::vector<std::size_t> counts;

  explicit ConfusionMatrix(std::size_t k = 0) : n_classes(k), counts(k * k, 0) {}

  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * n_classes + predicted]; }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * n_classes + predicted];
  }
  std::size_t total() const;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes);

struct ClassMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsSummary {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Per class: precision TP/(TP+FP), recall TP/(TP+FN), F1 TP/(TP+(FP+FN)/2),
/// each 0 when its denominator is 0. Accuracy is trace/total; macro averages
/// are unweighted. Throws ValueError on an empty matrix.
MetricsSummary compute_metrics(const ConfusionMatrix& cm);

/// (TP+TN)/(TP+TN+FP+FN) etc. for a single binary tally.
struct BinaryMetrics {
  double accuracy, precision, recall, f1;
};
BinaryMetrics binary_metrics(double tp, double tn, double fp, double fn);

struct ConfidenceInterval {
  double mean = 0.0;
  double stddev = 0.0;        // sample (n - 1) standard deviation
  double half_width_z = 0.0;  // 1.96 s / sqrt(n)
  double half_width_t = 0.0;  // t_{0.975, n-1} s / sqrt(n)
};

/// Throws ValueError for fewer than two values.
ConfidenceInterval confidence_interval(std::span<const double> values);

/// Two-sided 97.5% quantile of Student's t with `dof` degrees of freedom.
double student_t_975(std::size_t dof);

/// Confusion matrix as CSV: header row of predicted names, one row per true class.
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm,
                         std::span<const std::string> class_names);
/// Row-normalised percentages, one line per true class.
void write_confusion_text(std::ostream& out, const ConfusionMatrix& cm,
                          std::span<const std::string> class_names);
/// precision / recall / f1 / support per class plus accuracy and macro rows.
void write_classification_report(std::ostream& out, const MetricsSummary& m,
                                 std::span<const std::string> class_names);

}  // namespace wsense
