#pragma once

// The comparison models: KNN, random forest, an offline RBF-kernel SVM
// trained by SMO, and config builders for the neural baselines (5-layer DNN,
// conv-only, conv+LSTM with softmax). All are deterministic under fixed
// seeds; ties resolve toward lower indices.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "nids/error.hpp"
#include "nids/flow.hpp"
#include "nids/model.hpp"
#include "nids/rng.hpp"

namespace nids {

// ---------------------------------------------------------------------------
// K-nearest neighbours

struct KnnModel {
  std::vector<double> train;  // row-major n x d
  std::vector<int32_t> labels;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 5;
};

inline KnnModel knn_fit(const FlowTable& table, std::size_t k) {
  if (table.n_rows == 0) fail("EmptyTable", "knn needs at least one row");
  if (k < 1 || k > table.n_rows)
    fail("InvalidConfig", "k = " + std::to_string(k) + " outside [1, " +
                              std::to_string(table.n_rows) + "]");
  KnnModel m;
  m.train = table.features;
  m.labels = table.labels;
  m.n = table.n_rows;
  m.d = table.n_cols;
  m.k = k;
  return m;
}

// Majority label of the k nearest by Euclidean distance. Distance ties break
// toward the lower stored row index, vote ties toward the lower label id.
inline std::vector<int32_t> knn_predict(const KnnModel& model,
                                        const std::vector<double>& queries,
                                        std::size_t query_width) {
  if (query_width != model.d)
    fail("DimensionMismatch", "query width " + std::to_string(query_width) +
                                  " vs stored width " + std::to_string(model.d));
  std::size_t nq = queries.size() / query_width;
  std::vector<int32_t> out(nq);
  std::vector<std::pair<double, std::size_t>> dist(model.n);
  for (std::size_t q = 0; q < nq; ++q) {
    const double* query = queries.data() + q * query_width;
    for (std::size_t r = 0; r < model.n; ++r) {
      const double* row = model.train.data() + r * model.d;
      double acc = 0.0;
      for (std::size_t c = 0; c < model.d; ++c) {
        double diff = query[c] - row[c];
        acc += diff * diff;
      }
      dist[r] = {acc, r};
    }
    std::partial_sort(dist.begin(), dist.begin() + model.k, dist.end());
    int32_t max_label = 0;
    for (std::size_t i = 0; i < model.k; ++i)
      max_label = std::max(max_label, model.labels[dist[i].second]);
    std::vector<std::size_t> votes(static_cast<std::size_t>(max_label) + 1, 0);
    for (std::size_t i = 0; i < model.k; ++i)
      votes[static_cast<std::size_t>(model.labels[dist[i].second])]++;
    std::size_t best = 0;
    for (std::size_t l = 1; l < votes.size(); ++l)
      if (votes[l] > votes[best]) best = l;  // strict: low id wins ties
    out[q] = static_cast<int32_t>(best);
  }
  return out;
}

inline std::vector<int32_t> knn_predict(const KnnModel& model,
                                        const FlowTable& queries) {
  return knn_predict(model, queries.features, queries.n_cols);
}

// ---------------------------------------------------------------------------
// Random forest

struct TreeNode {
  int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  uint32_t left = 0;
  uint32_t right = 0;
  int32_t leaf_label = -1;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t n_classes = 0;
  std::size_t d = 0;
  std::size_t max_depth = 0;
  uint64_t seed = 0;
};

struct ForestOptions {
  std::size_t n_trees = 100;
  std::size_t max_depth = 16;
  uint64_t seed = 0;
  bool bootstrap = true;
  std::size_t features_per_split = 0;  // 0 -> floor(sqrt(d)), min 1
};

namespace forest_detail {

inline double gini(const std::vector<std::size_t>& counts, std::size_t total) {
  if (total == 0) return 0.0;
  double g = 1.0;
  for (std::size_t c : counts) {
    double p = static_cast<double>(c) / static_cast<double>(total);
    g -= p * p;
  }
  return g;
}

inline int32_t majority(const std::vector<std::size_t>& counts) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i)
    if (counts[i] > counts[best]) best = i;  // low label id wins ties
  return static_cast<int32_t>(best);
}

struct Builder {
  const FlowTable& table;
  std::size_t n_classes;
  std::size_t features_per_split;
  std::size_t max_depth;
  Rng rng;
  DecisionTree tree;

  Builder(const FlowTable& t, std::size_t classes, std::size_t fps,
          std::size_t depth, uint64_t seed)
      : table(t), n_classes(classes), features_per_split(fps), max_depth(depth),
        rng(seed) {}

  // First-best Gini split over a random feature subset, thresholds at
  // midpoints of consecutive distinct sorted values.
  std::size_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
    std::vector<std::size_t> counts(n_classes, 0);
    for (std::size_t r : rows)
      counts[static_cast<std::size_t>(table.labels[r])]++;
    std::size_t node_index = tree.nodes.size();
    tree.nodes.emplace_back();

    bool pure = false;
    for (std::size_t c : counts)
      if (c == rows.size()) pure = true;
    if (pure || depth >= max_depth || rows.size() < 2) {
      tree.nodes[node_index].leaf_label = majority(counts);
      return node_index;
    }

    // Sample feature candidates without replacement.
    std::vector<std::size_t> features(table.n_cols);
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = 0; i < features_per_split && i + 1 < features.size();
         ++i) {
      std::size_t j = i + static_cast<std::size_t>(
                              rng.below(features.size() - i));
      std::swap(features[i], features[j]);
    }
    features.resize(std::min(features_per_split, features.size()));

    double parent = gini(counts, rows.size());
    double best_score = parent;
    int32_t best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, std::size_t>> ordered(rows.size());
    for (std::size_t f : features) {
      for (std::size_t i = 0; i < rows.size(); ++i)
        ordered[i] = {table.at(rows[i], f), rows[i]};
      std::sort(ordered.begin(), ordered.end());
      std::vector<std::size_t> left_counts(n_classes, 0);
      std::size_t n_left = 0;
      for (std::size_t i = 0; i + 1 < ordered.size(); ++i) {
        left_counts[static_cast<std::size_t>(table.labels[ordered[i].second])]++;
        ++n_left;
        if (ordered[i].first == ordered[i + 1].first) continue;
        std::vector<std::size_t> right_counts(n_classes, 0);
        for (std::size_t c = 0; c < n_classes; ++c)
          right_counts[c] = counts[c] - left_counts[c];
        std::size_t n_right = rows.size() - n_left;
        double score =
            (static_cast<double>(n_left) * gini(left_counts, n_left) +
             static_cast<double>(n_right) * gini(right_counts, n_right)) /
            static_cast<double>(rows.size());
        if (score < best_score - 1e-12) {  // strict improvement, first best
          best_score = score;
          best_feature = static_cast<int32_t>(f);
          best_threshold = 0.5 * (ordered[i].first + ordered[i + 1].first);
        }
      }
    }

    if (best_feature < 0) {
      tree.nodes[node_index].leaf_label = majority(counts);
      return node_index;
    }

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      if (table.at(r, static_cast<std::size_t>(best_feature)) <= best_threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    tree.nodes[node_index].feature = best_feature;
    tree.nodes[node_index].threshold = best_threshold;
    tree.nodes[node_index].left =
        static_cast<uint32_t>(grow(left_rows, depth + 1));
    tree.nodes[node_index].right =
        static_cast<uint32_t>(grow(right_rows, depth + 1));
    return node_index;
  }
};

inline int32_t tree_predict(const DecisionTree& tree, const double* row) {
  std::size_t i = 0;
  while (tree.nodes[i].feature >= 0) {
    i = row[tree.nodes[i].feature] <= tree.nodes[i].threshold
            ? tree.nodes[i].left
            : tree.nodes[i].right;
  }
  return tree.nodes[i].leaf_label;
}

}  // namespace forest_detail

inline ForestModel forest_fit(const FlowTable& table, const ForestOptions& opts) {
  if (table.n_rows == 0) fail("EmptyTable", "forest needs at least one row");
  ForestModel model;
  model.d = table.n_cols;
  model.max_depth = opts.max_depth;
  model.seed = opts.seed;
  int32_t max_label = 0;
  for (int32_t l : table.labels) max_label = std::max(max_label, l);
  model.n_classes = static_cast<std::size_t>(max_label) + 1;

  std::size_t fps = opts.features_per_split;
  if (fps == 0)
    fps = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(std::sqrt(
               static_cast<double>(table.n_cols)))));
  fps = std::min(fps, table.n_cols);

  for (std::size_t t = 0; t < opts.n_trees; ++t) {
    uint64_t tree_seed = mix_seed(opts.seed, t);
    Rng boot(mix_seed(tree_seed, 0x626f6f74));
    std::vector<std::size_t> rows(table.n_rows);
    if (opts.bootstrap) {
      for (std::size_t i = 0; i < table.n_rows; ++i)
        rows[i] = static_cast<std::size_t>(boot.below(table.n_rows));
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    forest_detail::Builder builder(table, model.n_classes, fps, opts.max_depth,
                                   mix_seed(tree_seed, 0x74726565));
    builder.grow(rows, 0);
    model.trees.push_back(std::move(builder.tree));
  }
  return model;
}

inline std::vector<int32_t> forest_predict(const ForestModel& model,
                                           const std::vector<double>& queries,
                                           std::size_t query_width) {
  if (query_width != model.d)
    fail("DimensionMismatch", "query width " + std::to_string(query_width) +
                                  " vs trained width " + std::to_string(model.d));
  std::size_t nq = queries.size() / query_width;
  std::vector<int32_t> out(nq);
  std::vector<std::size_t> votes(model.n_classes);
  for (std::size_t q = 0; q < nq; ++q) {
    std::fill(votes.begin(), votes.end(), 0);
    const double* row = queries.data() + q * query_width;
    for (const DecisionTree& tree : model.trees)
      votes[static_cast<std::size_t>(forest_detail::tree_predict(tree, row))]++;
    std::size_t best = 0;
    for (std::size_t l = 1; l < votes.size(); ++l)
      if (votes[l] > votes[best]) best = l;
    out[q] = static_cast<int32_t>(best);
  }
  return out;
}

inline std::vector<int32_t> forest_predict(const ForestModel& model,
                                           const FlowTable& queries) {
  return forest_predict(model, queries.features, queries.n_cols);
}

// ---------------------------------------------------------------------------
// RBF-kernel SVM, one-vs-rest, trained by sequential minimal optimization

struct BinarySvm {
  std::vector<double> support_vectors;  // row-major n_sv x d
  std::vector<double> alpha;            // raw alpha_i in [0, C]
  std::vector<double> sign;             // y_i in {-1, +1}
  std::vector<uint32_t> sv_index;       // original training row ids
  double bias = 0.0;
};

struct RbfSvmModel {
  std::vector<BinarySvm> machines;  // one per class id
  double gamma = 1.0;
  double c = 1.0;
  std::size_t d = 0;
  std::size_t n_classes = 0;
};

namespace svm_detail {

inline double rbf_kernel(const double* a, const double* b, std::size_t d,
                         double gamma) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return std::exp(-gamma * acc);
}

// Platt's SMO on one binary problem with a precomputed kernel matrix and a
// deterministic second-choice heuristic (max |E1 - E2|, scan order as the
// fallback).
struct SmoSolver {
  const std::vector<double>& kernel;  // n x n
  const std::vector<double>& y;       // +-1
  std::size_t n;
  double c;
  double tol;
  std::vector<double> alpha;
  std::vector<double> error;  // E_i = f(x_i) - y_i
  double bias = 0.0;
  static constexpr double kEps = 1e-12;

  SmoSolver(const std::vector<double>& k, const std::vector<double>& labels,
            std::size_t count, double penalty, double tolerance)
      : kernel(k), y(labels), n(count), c(penalty), tol(tolerance),
        alpha(count, 0.0), error(count) {
    for (std::size_t i = 0; i < n; ++i) error[i] = -y[i];  // f starts at 0
  }

  double f_cached(std::size_t i) const { return error[i] + y[i]; }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    double a1 = alpha[i1], a2 = alpha[i2];
    double y1 = y[i1], y2 = y[i2];
    double e1 = error[i1], e2 = error[i2];
    double s = y1 * y2;
    double low, high;
    if (s < 0) {
      low = std::max(0.0, a2 - a1);
      high = std::min(c, c + a2 - a1);
    } else {
      low = std::max(0.0, a1 + a2 - c);
      high = std::min(c, a1 + a2);
    }
    if (high - low < kEps) return false;
    double k11 = kernel[i1 * n + i1];
    double k12 = kernel[i1 * n + i2];
    double k22 = kernel[i2 * n + i2];
    double eta = k11 + k22 - 2.0 * k12;
    double a2_new;
    if (eta > kEps) {
      a2_new = std::clamp(a2 + y2 * (e1 - e2) / eta, low, high);
    } else {
      // Degenerate curvature: pick the bound with the lower objective.
      double f1 = y1 * (e1 + bias) - a1 * k11 - s * a2 * k12;
      double f2 = y2 * (e2 + bias) - s * a1 * k12 - a2 * k22;
      double l1 = a1 + s * (a2 - low);
      double h1 = a1 + s * (a2 - high);
      double obj_low = l1 * f1 + low * f2 + 0.5 * l1 * l1 * k11 +
                       0.5 * low * low * k22 + s * low * l1 * k12;
      double obj_high = h1 * f1 + high * f2 + 0.5 * h1 * h1 * k11 +
                        0.5 * high * high * k22 + s * high * h1 * k12;
      if (obj_low < obj_high - kEps)
        a2_new = low;
      else if (obj_high < obj_low - kEps)
        a2_new = high;
      else
        return false;
    }
    if (std::abs(a2_new - a2) < kEps * (a2_new + a2 + kEps)) return false;
    double a1_new = a1 + s * (a2 - a2_new);

    double b1 = e1 + y1 * (a1_new - a1) * k11 + y2 * (a2_new - a2) * k12 + bias;
    double b2 = e2 + y1 * (a1_new - a1) * k12 + y2 * (a2_new - a2) * k22 + bias;
    double bias_new;
    if (a1_new > kEps && a1_new < c - kEps)
      bias_new = b1;
    else if (a2_new > kEps && a2_new < c - kEps)
      bias_new = b2;
    else
      bias_new = 0.5 * (b1 + b2);

    double d1 = y1 * (a1_new - a1);
    double d2 = y2 * (a2_new - a2);
    for (std::size_t i = 0; i < n; ++i)
      error[i] += d1 * kernel[i1 * n + i] + d2 * kernel[i2 * n + i] -
                  (bias_new - bias);
    alpha[i1] = a1_new;
    alpha[i2] = a2_new;
    bias = bias_new;
    return true;
  }

  bool examine(std::size_t i2) {
    double y2 = y[i2], a2 = alpha[i2], e2 = error[i2];
    double r2 = e2 * y2;
    if (!((r2 < -tol && a2 < c) || (r2 > tol && a2 > 0))) return false;
    // Heuristic 1: maximize |E1 - E2| over non-bound alphas.
    std::size_t best = n;
    double best_gap = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] <= kEps || alpha[i] >= c - kEps) continue;
      double gap = std::abs(error[i] - e2);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best < n && take_step(best, i2)) return true;
    // Heuristic 2: sweep non-bound, then all, from a fixed start.
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] <= kEps || alpha[i] >= c - kEps) continue;
      if (take_step(i, i2)) return true;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (take_step(i, i2)) return true;
    return false;
  }

  void solve(std::size_t max_passes) {
    std::size_t changed = 0;
    bool examine_all = true;
    std::size_t passes = 0;
    while (changed > 0 || examine_all) {
      if (++passes > max_passes)
        fail("NoConvergence", "SMO exceeded " + std::to_string(max_passes) +
                                  " passes");
      changed = 0;
      if (examine_all) {
        for (std::size_t i = 0; i < n; ++i) changed += examine(i) ? 1 : 0;
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          if (alpha[i] <= kEps || alpha[i] >= c - kEps) continue;
          changed += examine(i) ? 1 : 0;
        }
      }
      if (examine_all)
        examine_all = false;
      else if (changed == 0)
        examine_all = true;
    }
  }
};

}  // namespace svm_detail

// One one-vs-rest machine per class, each solved until KKT violations fall
// inside tol. Kernel K(x,z) = exp(-gamma |x - z|^2).
inline RbfSvmModel rbf_svm_fit(const std::vector<double>& features,
                               const std::vector<int32_t>& labels,
                               std::size_t width, double c, double gamma,
                               double tol = 1e-3,
                               std::size_t max_passes = 10000) {
  if (width == 0 || features.size() % width != 0)
    fail("DimensionMismatch", "feature matrix is not n x width");
  std::size_t n = features.size() / width;
  if (n != labels.size())
    fail("DimensionMismatch", "row count vs label count");
  if (c <= 0.0 || gamma <= 0.0)
    fail("InvalidConfig", "C and gamma must be positive");
  int32_t max_label = -1;
  for (int32_t l : labels) max_label = std::max(max_label, l);
  std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
  std::size_t distinct = 0;
  for (std::size_t cl = 0; cl < n_classes; ++cl)
    if (std::count(labels.begin(), labels.end(), static_cast<int32_t>(cl)) > 0)
      ++distinct;
  if (distinct < 2) fail("SingleClass", "need at least two classes present");

  std::vector<double> kernel(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double k = svm_detail::rbf_kernel(features.data() + i * width,
                                        features.data() + j * width, width,
                                        gamma);
      kernel[i * n + j] = k;
      kernel[j * n + i] = k;
    }

  RbfSvmModel model;
  model.gamma = gamma;
  model.c = c;
  model.d = width;
  model.n_classes = n_classes;
  for (std::size_t cl = 0; cl < n_classes; ++cl) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
      y[i] = labels[i] == static_cast<int32_t>(cl) ? 1.0 : -1.0;
    svm_detail::SmoSolver solver(kernel, y, n, c, tol);
    solver.solve(max_passes);
    BinarySvm machine;
    machine.bias = -solver.bias;  // store f(x) = sum alpha_i y_i K + bias
    for (std::size_t i = 0; i < n; ++i) {
      if (solver.alpha[i] <= svm_detail::SmoSolver::kEps) continue;
      machine.alpha.push_back(solver.alpha[i]);
      machine.sign.push_back(y[i]);
      machine.sv_index.push_back(static_cast<uint32_t>(i));
      machine.support_vectors.insert(machine.support_vectors.end(),
                                     features.begin() + i * width,
                                     features.begin() + (i + 1) * width);
    }
    model.machines.push_back(std::move(machine));
  }
  return model;
}

inline double svm_decision(const RbfSvmModel& model, const BinarySvm& machine,
                           const double* x) {
  std::size_t n_sv = machine.alpha.size();
  double acc = machine.bias;
  for (std::size_t i = 0; i < n_sv; ++i)
    acc += machine.alpha[i] * machine.sign[i] *
           svm_detail::rbf_kernel(machine.support_vectors.data() + i * model.d,
                                  x, model.d, model.gamma);
  return acc;
}

// Class of the one-vs-rest machine with the largest decision value.
inline std::vector<int32_t> rbf_svm_predict(const RbfSvmModel& model,
                                            const std::vector<double>& queries,
                                            std::size_t width) {
  if (width != model.d)
    fail("DimensionMismatch", "query width " + std::to_string(width) +
                                  " vs trained width " + std::to_string(model.d));
  std::size_t nq = queries.size() / width;
  std::vector<int32_t> out(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    const double* x = queries.data() + q * width;
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t cl = 0; cl < model.machines.size(); ++cl) {
      double v = svm_decision(model, model.machines[cl], x);
      if (v > best_value) {
        best_value = v;
        best = cl;
      }
    }
    out[q] = static_cast<int32_t>(best);
  }
  return out;
}

// Max KKT violation of one fitted machine over its training set, plus the
// equality-constraint residual |sum alpha_i y_i|. Verification hook for tests
// and the acceptance suite.
struct KktReport {
  double max_violation = 0.0;
  double equality_residual = 0.0;
};

inline KktReport rbf_svm_kkt(const RbfSvmModel& model, std::size_t machine_id,
                             const std::vector<double>& features,
                             const std::vector<int32_t>& labels) {
  const BinarySvm& machine = model.machines[machine_id];
  std::size_t n = labels.size();
  KktReport report;
  double eq = 0.0;
  for (std::size_t i = 0; i < machine.alpha.size(); ++i)
    eq += machine.alpha[i] * machine.sign[i];
  report.equality_residual = std::abs(eq);

  std::vector<double> alpha_by_row(n, 0.0);
  for (std::size_t s = 0; s < machine.alpha.size(); ++s)
    alpha_by_row[machine.sv_index[s]] = machine.alpha[s];
  for (std::size_t i = 0; i < n; ++i) {
    double y = labels[i] == static_cast<int32_t>(machine_id) ? 1.0 : -1.0;
    const double* x = features.data() + i * model.d;
    double margin = y * svm_decision(model, machine, x);
    double a = alpha_by_row[i];
    double violation = 0.0;
    if (a <= 1e-9)
      violation = std::max(0.0, 1.0 - margin);
    else if (a >= model.c - 1e-9)
      violation = std::max(0.0, margin - 1.0);
    else
      violation = std::abs(margin - 1.0);
    report.max_violation = std::max(report.max_violation, violation);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Neural baseline configs (widths and heads per the comparison table)

inline ModelConfig dnn5_config(std::size_t n_classes,
                               std::size_t input_length = 30) {
  ModelConfig c;
  c.arch = Arch::mlp;
  c.input_length = input_length;
  c.mlp_widths = {256, 128, 64, 32, 16};
  c.head = HeadKind::softmax_xent;
  c.n_classes = n_classes;
  c.l2_head = 0.0;
  return validate(c);
}

inline ModelConfig cnn_only_config(std::size_t n_classes,
                                   std::size_t input_length = 30) {
  ModelConfig c;
  c.arch = Arch::cnn_only;
  c.input_length = input_length;
  c.head = HeadKind::softmax_xent;
  c.n_classes = n_classes;
  c.l2_head = 0.0;
  return validate(c);
}

inline ModelConfig cnn_lstm_softmax_config(std::size_t n_classes,
                                           std::size_t input_length = 30) {
  ModelConfig c;
  c.arch = Arch::cnn_lstm;
  c.input_length = input_length;
  c.head = HeadKind::softmax_xent;
  c.n_classes = n_classes;
  c.l2_head = 0.0;
  return validate(c);
}

inline ModelConfig proposed_config(std::size_t n_classes,
                                   std::size_t input_length = 30) {
  ModelConfig c;
  c.arch = Arch::cnn_lstm;
  c.input_length = input_length;
  c.head = HeadKind::svm_margin;
  c.n_classes = n_classes;
  return validate(c);
}

}  // namespace nids
