#pragma once

// Seeded mini-batch training for every tensor-backed model. One code path
// serves the proposed network and the neural baselines; the loss comes from
// the model config. Identical config + seed reproduces identical parameters
// bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "nids/error.hpp"
#include "nids/flow.hpp"
#include "nids/model.hpp"
#include "nids/rng.hpp"
#include "nids/tensor.hpp"

namespace nids {

enum class Optimizer { sgd_momentum, adam };

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double momentum = 0.9;     // sgd_momentum only
  double beta1 = 0.9;        // adam
  double beta2 = 0.999;      // adam
  double adam_epsilon = 1e-8;
  uint64_t seed = 0;
  std::size_t early_stop_patience = 5;
  bool shuffle = true;
  bool class_weights = false;  // inverse-frequency loss weights
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_accuracy = 0.0;
};

// epoch,train_loss,val_accuracy rows.
inline void write_history_csv(const TrainHistory& history, std::ostream& out) {
  out << "epoch,train_loss,val_accuracy\n";
  for (const EpochStats& e : history.epochs)
    out << e.epoch << ',' << e.train_loss << ',' << e.val_accuracy << '\n';
}

// Inverse-frequency weights normalized to mean 1 over samples.
inline std::vector<double> inverse_frequency_weights(
    const std::vector<int32_t>& labels, std::size_t n_classes) {
  std::vector<double> counts(n_classes, 0.0);
  for (int32_t l : labels) counts[static_cast<std::size_t>(l)] += 1.0;
  std::vector<double> w(n_classes, 0.0);
  double n = static_cast<double>(labels.size());
  std::size_t present = 0;
  for (double c : counts)
    if (c > 0) ++present;
  for (std::size_t c = 0; c < n_classes; ++c)
    if (counts[c] > 0)
      w[c] = n / (static_cast<double>(present) * counts[c]);
  return w;
}

namespace train_detail {

struct OptState {
  std::vector<std::vector<double>> m;  // adam first moment / sgd velocity
  std::vector<std::vector<double>> v;  // adam second moment
  uint64_t step = 0;
};

inline void apply_update(std::vector<tc::Tensor>& params, OptState& state,
                         const TrainConfig& config) {
  if (state.m.empty()) {
    for (const tc::Tensor& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  state.step += 1;
  if (config.optimizer == Optimizer::adam) {
    double b1 = config.beta1, b2 = config.beta2;
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      tc::Tensor& p = params[i];
      const double* g = p.grad();
      double* w = p.data();
      auto& m = state.m[i];
      auto& v = state.v[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        w[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_epsilon);
      }
    }
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) {
      tc::Tensor& p = params[i];
      const double* g = p.grad();
      double* w = p.data();
      auto& vel = state.m[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        vel[j] = config.momentum * vel[j] - config.learning_rate * g[j];
        w[j] += vel[j];
      }
    }
  }
}

inline tc::Tensor gather_batch(const FlowTable& data,
                               const std::vector<std::size_t>& order,
                               std::size_t begin, std::size_t end,
                               std::vector<int32_t>& labels_out) {
  std::size_t bs = end - begin;
  std::vector<double> x(bs * data.n_cols);
  labels_out.resize(bs);
  for (std::size_t i = 0; i < bs; ++i) {
    std::size_t r = order[begin + i];
    const double* src = data.row(r);
    std::copy(src, src + data.n_cols, x.begin() + i * data.n_cols);
    labels_out[i] = data.labels[r];
  }
  return tc::Tensor::from_data({bs, data.n_cols}, std::move(x));
}

}  // namespace train_detail

// Batched eval-mode predictions over a whole table.
inline std::vector<int32_t> predict_table(const NetworkParams& params,
                                          const ModelConfig& config,
                                          const FlowTable& data,
                                          std::size_t chunk = 512) {
  std::vector<int32_t> out;
  out.reserve(data.n_rows);
  for (std::size_t begin = 0; begin < data.n_rows; begin += chunk) {
    std::size_t end = std::min(data.n_rows, begin + chunk);
    std::vector<double> x(data.features.begin() + begin * data.n_cols,
                          data.features.begin() + end * data.n_cols);
    tc::Tensor batch =
        tc::Tensor::from_data({end - begin, data.n_cols}, std::move(x));
    std::vector<int32_t> pred = predict(params, config, batch);
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

// Eval-mode penultimate features for a whole table, row-major n x feature_dim.
inline std::vector<double> penultimate_table(const NetworkParams& params,
                                             const ModelConfig& config,
                                             const FlowTable& data,
                                             std::size_t& feature_dim,
                                             std::size_t chunk = 512) {
  std::vector<double> out;
  feature_dim = 0;
  for (std::size_t begin = 0; begin < data.n_rows; begin += chunk) {
    std::size_t end = std::min(data.n_rows, begin + chunk);
    std::vector<double> x(data.features.begin() + begin * data.n_cols,
                          data.features.begin() + end * data.n_cols);
    tc::Tape silent(false);
    tc::Tensor feats = penultimate(
        silent, params, config,
        tc::Tensor::from_data({end - begin, data.n_cols}, std::move(x)), false);
    feature_dim = feats.dim(1);
    out.insert(out.end(), feats.data(), feats.data() + feats.size());
  }
  return out;
}

inline double accuracy_of(const std::vector<int32_t>& truth,
                          const std::vector<int32_t>& predicted) {
  if (truth.empty() || truth.size() != predicted.size())
    fail("LengthMismatch", "label vectors differ in length or are empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] == predicted[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// Trains in place and leaves `params` at the best-validation-accuracy epoch.
// Stops early once validation accuracy has not improved for
// early_stop_patience consecutive epochs.
inline TrainHistory train(NetworkParams& params, const ModelConfig& config,
                          const FlowTable& train_data, const FlowTable& val_data,
                          const TrainConfig& tconfig) {
  if (train_data.n_rows == 0 || val_data.n_rows == 0)
    fail("EmptyData", "train and validation splits must be nonempty");
  if (train_data.n_cols != config.input_length)
    fail("DimensionMismatch", "train width " + std::to_string(train_data.n_cols) +
                                  " vs model input " +
                                  std::to_string(config.input_length));
  for (int32_t l : train_data.labels)
    if (l < 0 || static_cast<std::size_t>(l) >= config.n_classes)
      fail("LabelOutOfRange", "training label " + std::to_string(l));
  if (tconfig.batch_size < 1) fail("InvalidConfig", "batch_size must be >= 1");
  if (tconfig.epochs < 1) fail("InvalidConfig", "epochs must be >= 1");
  if (!(tconfig.learning_rate >= 0.0))
    fail("InvalidConfig", "learning rate must be nonnegative");

  std::vector<double> class_weights;
  if (tconfig.class_weights)
    class_weights = inverse_frequency_weights(train_data.labels, config.n_classes);

  params.set_requires_grad(true);
  std::vector<tc::Tensor> leaves = params.all();
  train_detail::OptState opt;

  TrainHistory history;
  NetworkParams best = params.clone();
  double best_acc = -1.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train_data.n_rows);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < tconfig.epochs; ++epoch) {
    if (tconfig.shuffle) {
      std::iota(order.begin(), order.end(), 0);
      Rng rng(mix_seed(tconfig.seed, epoch));
      shuffle(order, rng);
    }
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += tconfig.batch_size, ++batch_index) {
      std::size_t end = std::min(order.size(), begin + tconfig.batch_size);
      std::vector<int32_t> labels;
      tc::Tensor batch =
          train_detail::gather_batch(train_data, order, begin, end, labels);
      tc::Tape tape;
      uint64_t dropout_seed = mix_seed(mix_seed(tconfig.seed, epoch), batch_index);
      tc::Tensor scores =
          forward(tape, params, config, batch, true, dropout_seed);
      tc::Tensor loss =
          config.head == HeadKind::svm_margin
              ? margin_loss(tape, scores, labels, config.l2_head,
                            params.head_weight, class_weights)
              : softmax_xent_loss(tape, scores, labels, class_weights);
      double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        fail("NonFiniteLoss", "epoch " + std::to_string(epoch + 1) + ", batch " +
                                  std::to_string(batch_index + 1) +
                                  ": loss is not finite");
      loss_sum += loss_value * static_cast<double>(end - begin);
      params.zero_grad();
      tape.backward(loss);
      train_detail::apply_update(leaves, opt, tconfig);
    }

    double val_acc =
        accuracy_of(val_data.labels, predict_table(params, config, val_data));
    history.epochs.push_back({epoch + 1,
                              loss_sum / static_cast<double>(order.size()),
                              val_acc});
    if (val_acc > best_acc) {
      best_acc = val_acc;
      best = params.clone();
      history.best_epoch = epoch + 1;
      history.best_val_accuracy = val_acc;
      since_best = 0;
    } else {
      since_best += 1;
      if (since_best >= tconfig.early_stop_patience) break;
    }
  }

  params = best.clone();
  params.set_requires_grad(true);
  return history;
}

}  // namespace nids
