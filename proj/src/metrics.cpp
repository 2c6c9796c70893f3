#include "wsense/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "wsense/errors.hpp"

namespace wsense {

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t n_classes) {
  if (truth.size() != predicted.size()) {
    throw ValueError("label lists differ in length: " + std::to_string(truth.size()) + " vs " +
                     std::to_string(predicted.size()));
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes ||
        static_cast<std::size_t>(p) >= n_classes) {
      throw ValueError("label out of range at position " + std::to_string(i));
    }
    ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

BinaryMetrics binary_metrics(double tp, double tn, double fp, double fn) {
  return {ratio(tp + tn, tp + tn + fp + fn), ratio(tp, tp + fp), ratio(tp, tp + fn),
          ratio(tp, tp + 0.5 * (fp + fn))};
}

MetricsSummary compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw ValueError("cannot compute metrics of an empty confusion matrix");
  const std::size_t K = cm.n_classes;
  MetricsSummary m;
  m.per_class.resize(K);
  std::size_t trace = 0;
  for (std::size_t c = 0; c < K; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < K; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    ClassMetrics& pc = m.per_class[c];
    pc.tp = cm.at(c, c);
    pc.fp = col - pc.tp;
    pc.fn = row - pc.tp;
    pc.tn = total - pc.tp - pc.fp - pc.fn;
    pc.support = row;
    const auto b = binary_metrics(static_cast<double>(pc.tp), static_cast<double>(pc.tn),
                                  static_cast<double>(pc.fp), static_cast<double>(pc.fn));
    pc.precision = b.precision;
    pc.recall = b.recall;
    pc.f1 = b.f1;
    trace += pc.tp;
    m.macro_precision += pc.precision;
    m.macro_recall += pc.recall;
    m.macro_f1 += pc.f1;
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  m.macro_precision /= static_cast<double>(K);
  m.macro_recall /= static_cast<double>(K);
  m.macro_f1 /= static_cast<double>(K);
  return m;
}

double student_t_975(std::size_t dof) {
  if (dof == 0) throw ValueError("Student t needs at least one degree of freedom");
  const boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

ConfidenceInterval confidence_interval(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw ValueError("confidence interval needs at least two values");
  ConfidenceInterval ci;
  ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
  ci.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  const double se = ci.stddev / std::sqrt(static_cast<double>(n));
  ci.half_width_z = 1.96 * se;
  ci.half_width_t = student_t_975(n - 1) * se;
  return ci;
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm,
                         std::span<const std::string> names) {
  out << "true\\predicted";
  for (std::size_t j = 0; j < cm.n_classes; ++j) out << ',' << names[j];
  out << '\n';
  for (std::size_t i = 0; i < cm.n_classes; ++i) {
    out << names[i];
    for (std::size_t j = 0; j < cm.n_classes; ++j) out << ',' << cm.at(i, j);
    out << '\n';
  }
}

void write_confusion_text(std::ostream& out, const ConfusionMatrix& cm,
                          std::span<const std::string> names) {
  std::size_t width = 8;
  for (const auto& n : names) width = std::max(width, n.size() + 1);
  out << std::setw(static_cast<int>(width)) << "";
  for (std::size_t j = 0; j < cm.n_classes; ++j) out << std::setw(9) << names[j].substr(0, 8);
  out << '\n' << std::fixed << std::setprecision(2);
  for (std::size_t i = 0; i < cm.n_classes; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < cm.n_classes; ++j) row += cm.at(i, j);
    out << std::left << std::setw(static_cast<int>(width)) << names[i] << std::right;
    for (std::size_t j = 0; j < cm.n_classes; ++j) {
      out << std::setw(9) << (row ? 100.0 * static_cast<double>(cm.at(i, j)) / static_cast<double>(row) : 0.0);
    }
    out << '\n';
  }
  out << std::defaultfloat;
}

void write_classification_report(std::ostream& out, const MetricsSummary& m,
                                 std::span<const std::string> names) {
  std::size_t width = 12;
  for (const auto& n : names) width = std::max(width, n.size() + 1);
  const int w = static_cast<int>(width);
  out << std::left << std::setw(w) << "" << std::right << std::setw(10) << "precision"
      << std::setw(10) << "recall" << std::setw(10) << "f1-score" << std::setw(10) << "support\n";
  out << std::fixed << std::setprecision(4);
  std::size_t total = 0;
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    total += pc.support;
    out << std::left << std::setw(w) << names[c] << std::right << std::setw(10) << pc.precision
        << std::setw(10) << pc.recall << std::setw(10) << pc.f1 << std::setw(9) << pc.support << '\n';
  }
  out << '\n'
      << std::left << std::setw(w) << "accuracy" << std::right << std::setw(30) << m.accuracy
      << std::setw(9) << total << '\n';
  out << std::left << std::setw(w) << "macro avg" << std::right << std::setw(10) << m.macro_precision
      << std::setw(10) << m.macro_recall << std::setw(10) << m.macro_f1 << std::setw(9) << total
      << '\n';
  out << std::defaultfloat;
}

}  // namespace wsense
