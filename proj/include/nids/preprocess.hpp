#pragma once

// The three-step preprocessing pass: column drop + non-finite row cleaning,
// min-max normalization, and PCA. Parameters are fitted on the training
// split only and applied unchanged to test data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nids/error.hpp"
#include "nids/flow.hpp"

namespace nids {

struct CleanReport {
  std::vector<std::string> dropped_columns;
  std::size_t dropped_rows = 0;
  std::size_t nonfinite_cells = 0;
};

struct MinMaxParams {
  std::vector<double> min;
  std::vector<double> max;
};

// Fitted PCA state. Component rows are orthonormal; the sign convention
// (largest-magnitude entry non-negative per row) makes checkpoints and test
// expectations deterministic.
struct PcaModel {
  std::vector<double> mean;                      // length d
  std::vector<double> components;                // row-major k x d
  std::vector<double> explained_variance_ratio;  // length k, nonincreasing
  std::size_t k = 0;
  std::size_t d = 0;

  const double* component(std::size_t i) const { return components.data() + i * d; }
};

// Drops the listed columns, then removes every row that still holds a
// NaN or infinity. Counts feed the preprocessing report.
inline std::pair<FlowTable, CleanReport> clean(
    const FlowTable& table, const std::vector<std::string>& drop_columns) {
  std::set<std::size_t> dropped;
  for (const std::string& name : drop_columns) {
    auto it = std::find(table.feature_names.begin(), table.feature_names.end(),
                        name);
    if (it == table.feature_names.end())
      fail("UnknownColumn", "no feature column named '" + name + "'");
    dropped.insert(static_cast<std::size_t>(it - table.feature_names.begin()));
  }

  FlowTable out;
  out.label_names = table.label_names;
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < table.n_cols; ++c)
    if (!dropped.count(c)) {
      kept.push_back(c);
      out.feature_names.push_back(table.feature_names[c]);
    }
  out.n_cols = kept.size();

  CleanReport report;
  for (std::size_t c : dropped) report.dropped_columns.push_back(table.feature_names[c]);

  for (std::size_t r = 0; r < table.n_rows; ++r) {
    const double* src = table.row(r);
    std::size_t bad = 0;
    for (std::size_t c : kept)
      if (!std::isfinite(src[c])) ++bad;
    if (bad > 0) {
      report.dropped_rows += 1;
      report.nonfinite_cells += bad;
      continue;
    }
    for (std::size_t c : kept) out.features.push_back(src[c]);
    out.labels.push_back(table.labels[r]);
    out.n_rows += 1;
  }
  return {std::move(out), std::move(report)};
}

inline MinMaxParams fit_minmax(const FlowTable& train) {
  if (train.n_rows == 0) fail("EmptyTable", "cannot fit min-max on zero rows");
  MinMaxParams p;
  p.min.assign(train.n_cols, std::numeric_limits<double>::infinity());
  p.max.assign(train.n_cols, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < train.n_rows; ++r) {
    const double* row = train.row(r);
    for (std::size_t c = 0; c < train.n_cols; ++c) {
      if (!std::isfinite(row[c]))
        fail("NonFiniteData", "min-max fit requires cleaned (finite) values");
      p.min[c] = std::min(p.min[c], row[c]);
      p.max[c] = std::max(p.max[c], row[c]);
    }
  }
  return p;
}

// x' = (x - min) / (max - min), clamped to [0, 1]; a constant feature maps
// to 0 so the network input domain stays bounded on unseen data.
inline FlowTable apply_minmax(const FlowTable& table, const MinMaxParams& params) {
  if (table.n_cols != params.min.size())
    fail("DimensionMismatch", "table has " + std::to_string(table.n_cols) +
                                  " features, params describe " +
                                  std::to_string(params.min.size()));
  FlowTable out = table;
  for (std::size_t r = 0; r < out.n_rows; ++r) {
    double* row = out.features.data() + r * out.n_cols;
    for (std::size_t c = 0; c < out.n_cols; ++c) {
      double range = params.max[c] - params.min[c];
      double v = range > 0.0 ? (row[c] - params.min[c]) / range : 0.0;
      row[c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

// Top-k principal directions of the training covariance (1/(n-1) estimator),
// taken from the SVD of the centered matrix rather than an explicit
// covariance eigendecomposition.
inline PcaModel fit_pca(const FlowTable& train, std::size_t k) {
  std::size_t n = train.n_rows, d = train.n_cols;
  if (n < 2) fail("DegenerateData", "PCA needs at least 2 rows");
  if (k < 1 || k > std::min(n, d))
    fail("KOutOfRange", "k = " + std::to_string(k) + " outside [1, " +
                            std::to_string(std::min(n, d)) + "]");

  PcaModel model;
  model.k = k;
  model.d = d;
  model.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = train.row(r);
    for (std::size_t c = 0; c < d; ++c) model.mean[c] += row[c];
  }
  for (double& m : model.mean) m /= static_cast<double>(n);

  Eigen::MatrixXd centered(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = train.row(r);
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = row[c] - model.mean[c];
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sigma = svd.singularValues();
  const auto& v = svd.matrixV();  // d x min(n,d), columns are directions

  double total = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) total += sigma[i] * sigma[i];
  if (total <= 0.0) total = 1.0;  // all-constant data: ratios become 0

  model.components.assign(k * d, 0.0);
  model.explained_variance_ratio.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    model.explained_variance_ratio[i] = sigma[i] * sigma[i] / total;
    // sign convention: largest-magnitude entry of each component >= 0
    std::size_t arg = 0;
    for (std::size_t c = 1; c < d; ++c)
      if (std::abs(v(c, i)) > std::abs(v(arg, i))) arg = c;
    double flip = v(arg, i) < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < d; ++c)
      model.components[i * d + c] = flip * v(c, i);
  }
  return model;
}

// Projects rows onto the fitted components: z = (x - mean) . C^T. Labels ride
// along; columns are renamed PC1..PCk.
inline FlowTable transform_pca(const FlowTable& table, const PcaModel& model) {
  if (table.n_cols != model.d)
    fail("DimensionMismatch", "table has " + std::to_string(table.n_cols) +
                                  " features, PCA expects " +
                                  std::to_string(model.d));
  FlowTable out;
  out.labels = table.labels;
  out.label_names = table.label_names;
  out.n_rows = table.n_rows;
  out.n_cols = model.k;
  for (std::size_t i = 0; i < model.k; ++i)
    out.feature_names.push_back("PC" + std::to_string(i + 1));
  out.features.assign(table.n_rows * model.k, 0.0);
  std::vector<double> centered(model.d);
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    const double* row = table.row(r);
    for (std::size_t c = 0; c < model.d; ++c) centered[c] = row[c] - model.mean[c];
    double* dst = out.features.data() + r * model.k;
    for (std::size_t i = 0; i < model.k; ++i) {
      const double* comp = model.component(i);
      double acc = 0.0;
      for (std::size_t c = 0; c < model.d; ++c) acc += centered[c] * comp[c];
      dst[i] = acc;
    }
  }
  return out;
}

// Reconstruction x_hat = mean + z . C, the rank-k map PCA is optimal for.
inline std::vector<double> reconstruct_pca(const PcaModel& model,
                                           const double* z) {
  std::vector<double> x(model.mean);
  for (std::size_t i = 0; i < model.k; ++i) {
    const double* comp = model.component(i);
    for (std::size_t c = 0; c < model.d; ++c) x[c] += z[i] * comp[c];
  }
  return x;
}

// Points (j, sum of the first j ratios); nondecreasing by construction.
inline std::vector<std::pair<std::size_t, double>> explained_variance_curve(
    const PcaModel& model) {
  std::vector<std::pair<std::size_t, double>> curve;
  double acc = 0.0;
  for (std::size_t j = 0; j < model.k; ++j) {
    acc += model.explained_variance_ratio[j];
    curve.emplace_back(j + 1, acc);
  }
  return curve;
}

}  // namespace nids
