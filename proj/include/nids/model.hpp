#pragma once

// The network zoo built on the tensor engine: the proposed conv + LSTM stack
// with a margin-loss (linear SVM) head, its softmax variant, a conv-only
// variant with global mean pooling, and a plain fully connected net. One
// config type describes all of them so the trainer and checkpoints stay
// uniform.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nids/error.hpp"
#include "nids/rng.hpp"
#include "nids/tensor.hpp"

namespace nids {

enum class Arch { cnn_lstm, cnn_only, mlp };
enum class HeadKind { svm_margin, softmax_xent };

struct ConvBlockSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  tc::Padding padding = tc::Padding::same;
};

struct ModelConfig {
  Arch arch = Arch::cnn_lstm;
  std::size_t input_length = 30;  // PCA width
  std::vector<ConvBlockSpec> conv_blocks = {
      {32, 3, tc::Padding::same},
      {64, 3, tc::Padding::same},
      {64, 3, tc::Padding::same},
  };
  std::size_t pool_width = 2;  // pooling sits between blocks, not after the last
  double dropout_rate = 0.3;
  std::size_t lstm_hidden = 64;
  std::size_t lstm_steps = 0;  // derived from the conv timeline by validate()
  HeadKind head = HeadKind::svm_margin;
  std::size_t n_classes = 2;
  double l2_head = 1e-4;
  std::vector<std::size_t> mlp_widths = {256, 128, 64, 32, 16};
};

// Sequence lengths after each conv block (pooling applied between blocks).
inline std::vector<std::size_t> conv_timeline(const ModelConfig& config) {
  std::vector<std::size_t> lengths;
  std::size_t len = config.input_length;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const ConvBlockSpec& block = config.conv_blocks[i];
    if (block.kernel == 0 || block.filters == 0)
      fail("InvalidConfig", "conv block " + std::to_string(i) +
                                " has zero kernel or filter count");
    if (block.padding == tc::Padding::valid) {
      if (block.kernel > len)
        fail("InvalidConfig", "conv block " + std::to_string(i) + " kernel " +
                                  std::to_string(block.kernel) +
                                  " exceeds sequence length " +
                                  std::to_string(len));
      len = len - block.kernel + 1;
    } else if (block.kernel > len) {
      fail("InvalidConfig", "conv block " + std::to_string(i) + " kernel " +
                                std::to_string(block.kernel) +
                                " exceeds sequence length " + std::to_string(len));
    }
    if (i + 1 < config.conv_blocks.size()) {
      if (config.pool_width == 0 || config.pool_width > len)
        fail("InvalidConfig", "pool width " + std::to_string(config.pool_width) +
                                  " invalid for sequence length " +
                                  std::to_string(len));
      len = (len - config.pool_width) / config.pool_width + 1;
    }
    lengths.push_back(len);
  }
  return lengths;
}

// Fills derived fields and checks invariants; throws InvalidConfig.
inline ModelConfig validate(ModelConfig config) {
  if (config.n_classes < 2) fail("InvalidConfig", "need at least 2 classes");
  if (config.input_length == 0) fail("InvalidConfig", "zero input length");
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0))
    fail("InvalidConfig", "dropout rate must lie in [0,1)");
  if (config.l2_head < 0.0) fail("InvalidConfig", "negative l2");
  if (config.arch == Arch::mlp) {
    if (config.mlp_widths.empty())
      fail("InvalidConfig", "mlp arch needs hidden widths");
    config.lstm_steps = 0;
    return config;
  }
  if (config.conv_blocks.empty())
    fail("InvalidConfig", "conv arch needs at least one block");
  std::vector<std::size_t> timeline = conv_timeline(config);
  if (timeline.back() == 0) fail("InvalidConfig", "conv timeline collapsed to 0");
  if (config.arch == Arch::cnn_lstm) {
    if (config.lstm_hidden == 0) fail("InvalidConfig", "zero LSTM width");
    config.lstm_steps = timeline.back();
  } else {
    config.lstm_steps = 0;
  }
  return config;
}

struct ConvBlockParams {
  tc::Tensor kernels;  // [filters, in_channels, kernel]
  tc::Tensor bias;     // [filters]
};

// Input-to-hidden and hidden-to-hidden gate matrices plus gate biases for
// input, forget, output and candidate gates.
struct LstmParams {
  tc::Tensor w_input, w_forget, w_output, w_cell;  // [in, hidden]
  tc::Tensor u_input, u_forget, u_output, u_cell;  // [hidden, hidden]
  tc::Tensor b_input, b_forget, b_output, b_cell;  // [hidden]
};

struct DenseParams {
  tc::Tensor weight;  // [in, out]
  tc::Tensor bias;    // [out]
};

struct NetworkParams {
  std::vector<ConvBlockParams> conv;
  LstmParams lstm;
  std::vector<DenseParams> dense;
  tc::Tensor head_weight;  // [n_classes, feature_dim]
  tc::Tensor head_bias;    // [n_classes]

  // Deterministic (name, tensor) order shared by the optimizer, the
  // checkpoint writer and the gradient checks.
  std::vector<std::pair<std::string, tc::Tensor>> named() const {
    std::vector<std::pair<std::string, tc::Tensor>> out;
    for (std::size_t i = 0; i < conv.size(); ++i) {
      out.emplace_back("conv" + std::to_string(i) + ".kernels", conv[i].kernels);
      out.emplace_back("conv" + std::to_string(i) + ".bias", conv[i].bias);
    }
    if (lstm.w_input.defined()) {
      out.emplace_back("lstm.w_input", lstm.w_input);
      out.emplace_back("lstm.w_forget", lstm.w_forget);
      out.emplace_back("lstm.w_output", lstm.w_output);
      out.emplace_back("lstm.w_cell", lstm.w_cell);
      out.emplace_back("lstm.u_input", lstm.u_input);
      out.emplace_back("lstm.u_forget", lstm.u_forget);
      out.emplace_back("lstm.u_output", lstm.u_output);
      out.emplace_back("lstm.u_cell", lstm.u_cell);
      out.emplace_back("lstm.b_input", lstm.b_input);
      out.emplace_back("lstm.b_forget", lstm.b_forget);
      out.emplace_back("lstm.b_output", lstm.b_output);
      out.emplace_back("lstm.b_cell", lstm.b_cell);
    }
    for (std::size_t i = 0; i < dense.size(); ++i) {
      out.emplace_back("dense" + std::to_string(i) + ".weight", dense[i].weight);
      out.emplace_back("dense" + std::to_string(i) + ".bias", dense[i].bias);
    }
    out.emplace_back("head.weight", head_weight);
    out.emplace_back("head.bias", head_bias);
    return out;
  }

  std::vector<tc::Tensor> all() const {
    std::vector<tc::Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  // Mutable views in the same order as named(); lets callers swap a single
  // parameter's storage (used by the full-model gradient checks).
  std::vector<tc::Tensor*> slots() {
    std::vector<tc::Tensor*> out;
    for (auto& c : conv) {
      out.push_back(&c.kernels);
      out.push_back(&c.bias);
    }
    if (lstm.w_input.defined()) {
      out.push_back(&lstm.w_input);
      out.push_back(&lstm.w_forget);
      out.push_back(&lstm.w_output);
      out.push_back(&lstm.w_cell);
      out.push_back(&lstm.u_input);
      out.push_back(&lstm.u_forget);
      out.push_back(&lstm.u_output);
      out.push_back(&lstm.u_cell);
      out.push_back(&lstm.b_input);
      out.push_back(&lstm.b_forget);
      out.push_back(&lstm.b_output);
      out.push_back(&lstm.b_cell);
    }
    for (auto& d : dense) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
    out.push_back(&head_weight);
    out.push_back(&head_bias);
    return out;
  }

  void set_requires_grad(bool v) {
    for (auto& t : all()) t.set_requires_grad(v);
  }
  void zero_grad() {
    for (auto& t : all()) t.zero_grad();
  }

  NetworkParams clone() const {
    NetworkParams out;
    for (const auto& c : conv)
      out.conv.push_back({c.kernels.clone(), c.bias.clone()});
    if (lstm.w_input.defined()) {
      out.lstm.w_input = lstm.w_input.clone();
      out.lstm.w_forget = lstm.w_forget.clone();
      out.lstm.w_output = lstm.w_output.clone();
      out.lstm.w_cell = lstm.w_cell.clone();
      out.lstm.u_input = lstm.u_input.clone();
      out.lstm.u_forget = lstm.u_forget.clone();
      out.lstm.u_output = lstm.u_output.clone();
      out.lstm.u_cell = lstm.u_cell.clone();
      out.lstm.b_input = lstm.b_input.clone();
      out.lstm.b_forget = lstm.b_forget.clone();
      out.lstm.b_output = lstm.b_output.clone();
      out.lstm.b_cell = lstm.b_cell.clone();
    }
    for (const auto& d : dense)
      out.dense.push_back({d.weight.clone(), d.bias.clone()});
    out.head_weight = head_weight.clone();
    out.head_bias = head_bias.clone();
    return out;
  }
};

namespace model_detail {

// Glorot-uniform draw in +-sqrt(6 / (fan_in + fan_out)).
inline tc::Tensor glorot(tc::Shape shape, std::size_t fan_in,
                         std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::size_t n = tc::numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return tc::Tensor::from_data(std::move(shape), std::move(v), true);
}

}  // namespace model_detail

// Deterministic initialization: Glorot-uniform weights drawn in a fixed
// parameter order, zero biases except the LSTM forget gate at 1.0.
inline NetworkParams build(const ModelConfig& raw_config, uint64_t seed) {
  ModelConfig config = validate(raw_config);
  Rng rng(seed);
  NetworkParams params;

  std::size_t feature_dim = 0;
  if (config.arch == Arch::mlp) {
    std::size_t in = config.input_length;
    for (std::size_t width : config.mlp_widths) {
      DenseParams d;
      d.weight = model_detail::glorot({in, width}, in, width, rng);
      d.bias = tc::Tensor::zeros({width}, true);
      params.dense.push_back(std::move(d));
      in = width;
    }
    feature_dim = in;
  } else {
    std::size_t in_channels = 1;
    for (const ConvBlockSpec& block : config.conv_blocks) {
      ConvBlockParams c;
      std::size_t fan_in = in_channels * block.kernel;
      std::size_t fan_out = block.filters * block.kernel;
      c.kernels = model_detail::glorot({block.filters, in_channels, block.kernel},
                                       fan_in, fan_out, rng);
      c.bias = tc::Tensor::zeros({block.filters}, true);
      params.conv.push_back(std::move(c));
      in_channels = block.filters;
    }
    if (config.arch == Arch::cnn_lstm) {
      std::size_t d = in_channels, h = config.lstm_hidden;
      auto w = [&]() { return model_detail::glorot({d, h}, d, h, rng); };
      auto u = [&]() { return model_detail::glorot({h, h}, h, h, rng); };
      params.lstm.w_input = w();
      params.lstm.w_forget = w();
      params.lstm.w_output = w();
      params.lstm.w_cell = w();
      params.lstm.u_input = u();
      params.lstm.u_forget = u();
      params.lstm.u_output = u();
      params.lstm.u_cell = u();
      params.lstm.b_input = tc::Tensor::zeros({h}, true);
      params.lstm.b_forget = tc::Tensor::full({h}, 1.0);
      params.lstm.b_forget.set_requires_grad(true);
      params.lstm.b_output = tc::Tensor::zeros({h}, true);
      params.lstm.b_cell = tc::Tensor::zeros({h}, true);
      feature_dim = h;
    } else {
      feature_dim = in_channels;
    }
  }
  params.head_weight = model_detail::glorot({config.n_classes, feature_dim},
                                            feature_dim, config.n_classes, rng);
  params.head_bias = tc::Tensor::zeros({config.n_classes}, true);
  return params;
}

// One LSTM cell update over a batch: rows of x_t/h_prev/c_prev are samples.
// i,f,o = sigmoid(xW + hU + b), g = tanh(xW + hU + b),
// c = f.c_prev + i.g, h = o.tanh(c).
inline std::pair<tc::Tensor, tc::Tensor> lstm_step(tc::Tape& tape,
                                                   const LstmParams& p,
                                                   const tc::Tensor& x_t,
                                                   const tc::Tensor& h_prev,
                                                   const tc::Tensor& c_prev) {
  using namespace tc;
  auto gate = [&](const Tensor& w, const Tensor& u, const Tensor& b) {
    return add(tape, add(tape, matmul(tape, x_t, w), matmul(tape, h_prev, u)), b);
  };
  Tensor gi = sigmoid(tape, gate(p.w_input, p.u_input, p.b_input));
  Tensor gf = sigmoid(tape, gate(p.w_forget, p.u_forget, p.b_forget));
  Tensor go = sigmoid(tape, gate(p.w_output, p.u_output, p.b_output));
  Tensor gc = tanh(tape, gate(p.w_cell, p.u_cell, p.b_cell));
  Tensor c_t = add(tape, mul(tape, gf, c_prev), mul(tape, gi, gc));
  Tensor h_t = mul(tape, go, tanh(tape, c_t));
  return {h_t, c_t};
}

// Penultimate features: the representation the head scores. For the
// conv+LSTM stack this is the final hidden state; for conv-only the
// position-averaged channels; for the MLP the last hidden layer.
inline tc::Tensor penultimate(tc::Tape& tape, const NetworkParams& params,
                              const ModelConfig& config, const tc::Tensor& batch,
                              bool train_mode, uint64_t dropout_seed = 0) {
  using namespace tc;
  if (batch.rank() != 2 || batch.dim(1) != config.input_length)
    fail("ShapeMismatch", "batch " + shape_str(batch.shape()) + " vs input length " +
                              std::to_string(config.input_length));
  std::size_t b = batch.dim(0);

  if (config.arch == Arch::mlp) {
    Tensor x = batch;
    for (const DenseParams& d : params.dense)
      x = relu(tape, add(tape, matmul(tape, x, d.weight), d.bias));
    return x;
  }

  Tensor x = reshape(tape, batch, {b, 1, config.input_length});
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    x = relu(tape, conv1d(tape, x, params.conv[i].kernels, params.conv[i].bias,
                          config.conv_blocks[i].padding));
    if (i + 1 < params.conv.size())
      x = maxpool1d(tape, x, config.pool_width, config.pool_width);
  }
  x = dropout(tape, x, config.dropout_rate, train_mode, dropout_seed);

  if (config.arch == Arch::cnn_only) return reduce_mean(tape, x, 2);

  // The post-conv positions become the LSTM's time axis; each step consumes
  // the channel vector at one position.
  std::size_t channels = x.dim(1);
  std::size_t steps = x.dim(2);
  Tensor h = Tensor::zeros({b, config.lstm_hidden});
  Tensor c = Tensor::zeros({b, config.lstm_hidden});
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x_t = reshape(tape, slice(tape, x, 2, t, t + 1), {b, channels});
    auto [h_next, c_next] = lstm_step(tape, params.lstm, x_t, h, c);
    h = h_next;
    c = c_next;
  }
  return h;
}

// scores = features . W^T + bias, shape [batch, n_classes].
inline tc::Tensor forward(tc::Tape& tape, const NetworkParams& params,
                          const ModelConfig& config, const tc::Tensor& batch,
                          bool train_mode, uint64_t dropout_seed = 0) {
  tc::Tensor feats =
      penultimate(tape, params, config, batch, train_mode, dropout_seed);
  return tc::add(tape, tc::matmul(tape, feats, params.head_weight, false, true),
                 params.head_bias);
}

namespace model_detail {

inline void check_scores(const tc::Tensor& scores) {
  if (!scores.defined() || scores.rank() != 2)
    fail("ShapeMismatch", "scores must be [batch, classes]");
}

inline void check_labels(const std::vector<int32_t>& labels, std::size_t n_classes,
                         std::size_t batch) {
  if (labels.size() != batch)
    fail("ShapeMismatch", "labels " + std::to_string(labels.size()) +
                              " vs batch " + std::to_string(batch));
  for (int32_t l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes)
      fail("LabelOutOfRange", "label id " + std::to_string(l) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
}

}  // namespace model_detail

// One-vs-rest squared hinge with targets +-1:
//   (1/(bC)) sum max(0, 1 - t*s)^2 + l2 * |W|_F^2.
// Optional per-class weights scale each sample's row (off when empty).
inline tc::Tensor margin_loss(tc::Tape& tape, const tc::Tensor& scores,
                              const std::vector<int32_t>& labels, double l2,
                              const tc::Tensor& head_weights,
                              const std::vector<double>& class_weights = {}) {
  using namespace tc;
  model_detail::check_scores(scores);
  std::size_t b = scores.dim(0), c = scores.dim(1);
  model_detail::check_labels(labels, c, b);
  std::vector<double> t(b * c, -1.0);
  for (std::size_t i = 0; i < b; ++i)
    t[i * c + static_cast<std::size_t>(labels[i])] = 1.0;
  Tensor targets = Tensor::from_data({b, c}, std::move(t));
  Tensor hinge = max_with_scalar(
      tape, sub(tape, Tensor::full({b, c}, 1.0), mul(tape, scores, targets)),
      0.0);
  Tensor sq = square(tape, hinge);
  if (!class_weights.empty()) {
    std::vector<double> w(b * c);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < c; ++j)
        w[i * c + j] = class_weights[static_cast<std::size_t>(labels[i])];
    sq = mul(tape, sq, Tensor::from_data({b, c}, std::move(w)));
  }
  Tensor data_term = reduce_mean(tape, sq);
  if (l2 <= 0.0) return data_term;
  Tensor reg = mul(tape, reduce_sum(tape, square(tape, head_weights)),
                   Tensor::scalar(l2));
  return add(tape, data_term, reg);
}

// Mean negative log softmax probability of the true class. Fused forward +
// backward on the tape: the gradient is (softmax - onehot)/b, computed with
// max-subtraction so huge scores cannot overflow.
inline tc::Tensor softmax_xent_loss(tc::Tape& tape, const tc::Tensor& scores,
                                    const std::vector<int32_t>& labels,
                                    const std::vector<double>& class_weights = {}) {
  using namespace tc;
  model_detail::check_scores(scores);
  std::size_t b = scores.dim(0), c = scores.dim(1);
  model_detail::check_labels(labels, c, b);
  auto probs = std::make_shared<std::vector<double>>(b * c);
  auto weights = std::make_shared<std::vector<double>>(b, 1.0);
  if (!class_weights.empty())
    for (std::size_t i = 0; i < b; ++i)
      (*weights)[i] = class_weights[static_cast<std::size_t>(labels[i])];
  double loss_value = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = scores.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    double log_denom = std::log(denom);
    for (std::size_t j = 0; j < c; ++j)
      (*probs)[i * c + j] = std::exp(row[j] - mx) / denom;
    std::size_t y = static_cast<std::size_t>(labels[i]);
    loss_value -= (*weights)[i] * (row[y] - mx - log_denom);
  }
  loss_value /= static_cast<double>(b);
  Tensor out = Tensor::scalar(loss_value);
  if (tape.recording() && scores.requires_grad()) {
    const_cast<Tensor&>(scores).ensure_grad();
    auto lbl = std::make_shared<std::vector<int32_t>>(labels);
    tape.record(out, [ss = scores.shared(), so = out.shared(), probs, lbl,
                      weights, b, c]() {
      double g = so->grad[0] / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        double w = (*weights)[i] * g;
        std::size_t y = static_cast<std::size_t>((*lbl)[i]);
        for (std::size_t j = 0; j < c; ++j)
          ss->grad[i * c + j] += w * ((*probs)[i * c + j] - (j == y ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

// Eval-mode argmax; ties break toward the lowest class index.
inline std::vector<int32_t> predict(const NetworkParams& params,
                                    const ModelConfig& config,
                                    const tc::Tensor& batch) {
  tc::Tape silent(false);
  tc::Tensor scores = forward(silent, params, config, batch, false);
  std::size_t b = scores.dim(0), c = scores.dim(1);
  std::vector<int32_t> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = scores.data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = static_cast<int32_t>(best);
  }
  return out;
}

}  // namespace nids
