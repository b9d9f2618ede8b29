#pragma once

// Classification metrics and the accuracy-comparison report. Accuracy is the
// headline number; per-class precision/recall/F1 are supplementary because
// flow corpora are heavily imbalanced.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nids/error.hpp"

namespace nids {

struct Metrics {
  std::vector<std::size_t> confusion;  // row-major C x C, rows = true class
  std::size_t n_classes = 0;
  double accuracy = 0.0;
  std::vector<double> precision;  // 0/0 counts as 0
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::size_t> support;  // true-class counts

  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return confusion[truth * n_classes + predicted];
  }
};

inline Metrics compute_metrics(const std::vector<int32_t>& truth,
                               const std::vector<int32_t>& predicted,
                               std::size_t n_classes) {
  if (truth.size() != predicted.size() || truth.empty())
    fail("LengthMismatch", "need equal-length nonempty label vectors");
  Metrics m;
  m.n_classes = n_classes;
  m.confusion.assign(n_classes * n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    int32_t t = truth[i], p = predicted[i];
    if (t < 0 || static_cast<std::size_t>(t) >= n_classes || p < 0 ||
        static_cast<std::size_t>(p) >= n_classes)
      fail("LabelOutOfRange", "pair (" + std::to_string(t) + ", " +
                                  std::to_string(p) + ") at row " +
                                  std::to_string(i));
    m.confusion[static_cast<std::size_t>(t) * n_classes +
                static_cast<std::size_t>(p)] += 1;
  }
  std::size_t diag = 0;
  m.precision.assign(n_classes, 0.0);
  m.recall.assign(n_classes, 0.0);
  m.f1.assign(n_classes, 0.0);
  m.support.assign(n_classes, 0);
  for (std::size_t c = 0; c < n_classes; ++c) {
    diag += m.at(c, c);
    std::size_t row_total = 0, col_total = 0;
    for (std::size_t j = 0; j < n_classes; ++j) {
      row_total += m.at(c, j);
      col_total += m.at(j, c);
    }
    m.support[c] = row_total;
    double tp = static_cast<double>(m.at(c, c));
    m.precision[c] = col_total ? tp / static_cast<double>(col_total) : 0.0;
    m.recall[c] = row_total ? tp / static_cast<double>(row_total) : 0.0;
    m.f1[c] = (m.precision[c] + m.recall[c]) > 0
                  ? 2.0 * m.precision[c] * m.recall[c] /
                        (m.precision[c] + m.recall[c])
                  : 0.0;
  }
  m.accuracy = static_cast<double>(diag) / static_cast<double>(truth.size());
  return m;
}

// Round half-up (toward +infinity) at two decimals; the report's published
// precision.
inline double round2(double v) { return std::floor(v * 100.0 + 0.5) / 100.0; }

struct ComparisonRow {
  std::string name;
  double accuracy_percent = 0.0;
  double delta = 0.0;   // proposed minus this model, percentage points
  bool is_proposed = false;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;  // ascending accuracy, proposed last
  std::string proposed;
};

// Rows sorted ascending by accuracy (ties by name), proposed pinned last.
// Delta column: proposed accuracy minus the row's, rounded half-up to two
// decimals; absent on the proposed row.
inline ComparisonReport comparison_table(
    const std::map<std::string, double>& results, const std::string& proposed) {
  auto it = results.find(proposed);
  if (it == results.end())
    fail("MissingProposed", "no accuracy entry for '" + proposed + "'");
  double proposed_acc = it->second;

  ComparisonReport report;
  report.proposed = proposed;
  for (const auto& [name, acc] : results) {
    if (name == proposed) continue;
    report.rows.push_back({name, acc, round2(proposed_acc - acc), false});
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ComparisonRow& a, const ComparisonRow& b) {
              if (a.accuracy_percent != b.accuracy_percent)
                return a.accuracy_percent < b.accuracy_percent;
              return a.name < b.name;
            });
  report.rows.push_back({proposed, proposed_acc, 0.0, true});
  return report;
}

inline void write_comparison_text(const ComparisonReport& report,
                                  std::ostream& out) {
  std::size_t width = 8;
  for (const ComparisonRow& r : report.rows)
    width = std::max(width, r.name.size());
  out << std::left << std::setw(static_cast<int>(width + 2)) << "Model"
      << std::right << std::setw(10) << "Accuracy" << std::setw(22)
      << "Increase in accuracy" << '\n';
  std::ostringstream cell;
  for (const ComparisonRow& r : report.rows) {
    out << std::left << std::setw(static_cast<int>(width + 2)) << r.name
        << std::right << std::setw(9) << std::fixed << std::setprecision(2)
        << r.accuracy_percent << '%';
    if (r.is_proposed)
      out << std::setw(22) << "-";
    else
      out << std::setw(22) << std::fixed << std::setprecision(2) << r.delta;
    out << '\n';
  }
}

inline void write_comparison_csv(const ComparisonReport& report,
                                 std::ostream& out) {
  out << "model,accuracy_percent,increase_in_accuracy\n";
  for (const ComparisonRow& r : report.rows) {
    out << r.name << ',' << std::fixed << std::setprecision(2)
        << r.accuracy_percent << ',';
    if (!r.is_proposed)
      out << std::fixed << std::setprecision(2) << r.delta;
    out << '\n';
  }
}

inline void write_metrics_text(const Metrics& m,
                               const std::vector<std::string>& class_names,
                               std::ostream& out) {
  out << "accuracy: " << std::fixed << std::setprecision(4) << m.accuracy
      << '\n';
  std::size_t width = 5;
  for (const std::string& n : class_names) width = std::max(width, n.size());
  out << std::left << std::setw(static_cast<int>(width + 2)) << "class"
      << std::right << std::setw(11) << "precision" << std::setw(9) << "recall"
      << std::setw(9) << "f1" << std::setw(10) << "support" << '\n';
  for (std::size_t c = 0; c < m.n_classes; ++c) {
    out << std::left << std::setw(static_cast<int>(width + 2))
        << (c < class_names.size() ? class_names[c] : std::to_string(c))
        << std::right << std::fixed << std::setprecision(4) << std::setw(11)
        << m.precision[c] << std::setw(9) << m.recall[c] << std::setw(9)
        << m.f1[c] << std::setw(10) << m.support[c] << '\n';
  }
}

inline void write_confusion_csv(const Metrics& m,
                                const std::vector<std::string>& class_names,
                                std::ostream& out) {
  out << "true\\pred";
  for (std::size_t c = 0; c < m.n_classes; ++c)
    out << ',' << (c < class_names.size() ? class_names[c] : std::to_string(c));
  out << '\n';
  for (std::size_t r = 0; r < m.n_classes; ++r) {
    out << (r < class_names.size() ? class_names[r] : std::to_string(r));
    for (std::size_t c = 0; c < m.n_classes; ++c) out << ',' << m.at(r, c);
    out << '\n';
  }
}

}  // namespace nids
