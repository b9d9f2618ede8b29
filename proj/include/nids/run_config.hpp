#pragma once

// Flat key=value run configuration. A file sets values, command-line flags
// override them, unknown keys are rejected, and the full effective
// configuration is echoed into reports and checkpoints so a run can be
// reproduced from its outputs alone.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nids/baselines.hpp"
#include "nids/flow.hpp"
#include "nids/model.hpp"
#include "nids/trainer.hpp"

namespace nids {

struct RunConfig {
  SplitSpec split;
  std::size_t pca_k = 30;
  std::vector<std::string> drop_columns = {"Destination Port"};
  ModelConfig model;      // arch and n_classes are set by the model tag / data
  TrainConfig train;
  double val_fraction = 0.1;  // carved from the training split
  std::size_t knn_k = 5;
  std::size_t rf_trees = 100;
  std::size_t rf_depth = 16;
  double svm_c = 10.0;
  double svm_gamma = 0.5;
  double svm_tol = 1e-3;
  std::size_t svm_max_rows = 2000;  // SMO is quadratic; cap its training set
};

namespace runcfg_detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail("BadValue", "expected a boolean, got '" + v + "'");
}

inline double parse_double(const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail("BadValue", "expected a number, got '" + v + "'");
  }
}

inline uint64_t parse_u64(const std::string& v) {
  try {
    std::size_t used = 0;
    unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    fail("BadValue", "expected a nonnegative integer, got '" + v + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) out.push_back(csv_detail::trim(item));
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(v))
    out.push_back(static_cast<std::size_t>(parse_u64(item)));
  return out;
}

// "32:3:same,64:3:same,64:3:same"
inline std::vector<ConvBlockSpec> parse_conv_blocks(const std::string& v) {
  std::vector<ConvBlockSpec> out;
  for (const std::string& item : split_list(v)) {
    std::vector<std::string> parts;
    std::string piece;
    std::istringstream in(item);
    while (std::getline(in, piece, ':')) parts.push_back(piece);
    if (parts.size() != 3)
      fail("BadValue", "conv block '" + item + "' is not filters:kernel:padding");
    ConvBlockSpec spec;
    spec.filters = static_cast<std::size_t>(parse_u64(parts[0]));
    spec.kernel = static_cast<std::size_t>(parse_u64(parts[1]));
    if (parts[2] == "same")
      spec.padding = tc::Padding::same;
    else if (parts[2] == "valid")
      spec.padding = tc::Padding::valid;
    else
      fail("BadValue", "padding '" + parts[2] + "' is not same|valid");
    out.push_back(spec);
  }
  return out;
}

inline std::string join_conv_blocks(const std::vector<ConvBlockSpec>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(blocks[i].filters) + ':' +
           std::to_string(blocks[i].kernel) + ':' +
           (blocks[i].padding == tc::Padding::same ? "same" : "valid");
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(items[i]);
  }
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace runcfg_detail

// Applies one key=value pair; throws UnknownKey / BadValue.
inline void apply_key(RunConfig& config, const std::string& key,
                      const std::string& value) {
  using namespace runcfg_detail;
  if (key == "split.test_fraction") config.split.test_fraction = parse_double(value);
  else if (key == "split.seed") config.split.seed = parse_u64(value);
  else if (key == "split.stratified") config.split.stratified = parse_bool(value);
  else if (key == "prep.pca_k") config.pca_k = parse_u64(value);
  else if (key == "prep.drop_columns") config.drop_columns = split_list(value);
  else if (key == "model.input_length") config.model.input_length = parse_u64(value);
  else if (key == "model.conv_blocks") config.model.conv_blocks = parse_conv_blocks(value);
  else if (key == "model.pool_width") config.model.pool_width = parse_u64(value);
  else if (key == "model.dropout_rate") config.model.dropout_rate = parse_double(value);
  else if (key == "model.lstm_hidden") config.model.lstm_hidden = parse_u64(value);
  else if (key == "model.l2_head") config.model.l2_head = parse_double(value);
  else if (key == "model.mlp_widths") config.model.mlp_widths = parse_size_list(value);
  else if (key == "train.batch_size") config.train.batch_size = parse_u64(value);
  else if (key == "train.epochs") config.train.epochs = parse_u64(value);
  else if (key == "train.learning_rate") config.train.learning_rate = parse_double(value);
  else if (key == "train.optimizer") {
    if (value == "adam") config.train.optimizer = Optimizer::adam;
    else if (value == "sgd_momentum") config.train.optimizer = Optimizer::sgd_momentum;
    else fail("BadValue", "optimizer '" + value + "' is not adam|sgd_momentum");
  }
  else if (key == "train.momentum") config.train.momentum = parse_double(value);
  else if (key == "train.beta1") config.train.beta1 = parse_double(value);
  else if (key == "train.beta2") config.train.beta2 = parse_double(value);
  else if (key == "train.adam_epsilon") config.train.adam_epsilon = parse_double(value);
  else if (key == "train.seed") config.train.seed = parse_u64(value);
  else if (key == "train.early_stop_patience") config.train.early_stop_patience = parse_u64(value);
  else if (key == "train.shuffle") config.train.shuffle = parse_bool(value);
  else if (key == "train.class_weights") config.train.class_weights = parse_bool(value);
  else if (key == "train.val_fraction") config.val_fraction = parse_double(value);
  else if (key == "knn.k") config.knn_k = parse_u64(value);
  else if (key == "rf.n_trees") config.rf_trees = parse_u64(value);
  else if (key == "rf.max_depth") config.rf_depth = parse_u64(value);
  else if (key == "svm.c") config.svm_c = parse_double(value);
  else if (key == "svm.gamma") config.svm_gamma = parse_double(value);
  else if (key == "svm.tol") config.svm_tol = parse_double(value);
  else if (key == "svm.max_rows") config.svm_max_rows = parse_u64(value);
  else fail("UnknownKey", "unrecognized configuration key '" + key + "'");
}

// Lines of `key = value`; blank lines and # comments allowed.
inline void load_config_file(RunConfig& config,
                             const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("FileNotFound", "cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = csv_detail::trim(line);
    if (text.empty() || text[0] == '#') continue;
    std::size_t eq = text.find('=');
    if (eq == std::string::npos)
      fail("BadValue", path.string() + ":" + std::to_string(line_no) +
                           ": expected key = value");
    std::string key = csv_detail::trim(text.substr(0, eq));
    std::string value = csv_detail::trim(text.substr(eq + 1));
    try {
      apply_key(config, key, value);
    } catch (const Error& e) {
      fail(e.name(), path.string() + ":" + std::to_string(line_no) + ": " +
                         e.what());
    }
  }
}

// Every effective value, in a fixed order; printed by each command and
// stored verbatim inside checkpoints.
inline std::map<std::string, std::string> effective_config(
    const RunConfig& config) {
  using namespace runcfg_detail;
  std::map<std::string, std::string> out;
  out["split.test_fraction"] = format_double(config.split.test_fraction);
  out["split.seed"] = std::to_string(config.split.seed);
  out["split.stratified"] = config.split.stratified ? "true" : "false";
  out["prep.pca_k"] = std::to_string(config.pca_k);
  out["prep.drop_columns"] = join_list(config.drop_columns);
  out["model.input_length"] = std::to_string(config.model.input_length);
  out["model.conv_blocks"] = join_conv_blocks(config.model.conv_blocks);
  out["model.pool_width"] = std::to_string(config.model.pool_width);
  out["model.dropout_rate"] = format_double(config.model.dropout_rate);
  out["model.lstm_hidden"] = std::to_string(config.model.lstm_hidden);
  out["model.lstm_steps"] = std::to_string(config.model.lstm_steps);
  out["model.n_classes"] = std::to_string(config.model.n_classes);
  out["model.head"] = config.model.head == HeadKind::svm_margin
                          ? "svm_margin"
                          : "softmax_xent";
  out["model.l2_head"] = format_double(config.model.l2_head);
  out["model.mlp_widths"] = join_sizes(config.model.mlp_widths);
  out["train.batch_size"] = std::to_string(config.train.batch_size);
  out["train.epochs"] = std::to_string(config.train.epochs);
  out["train.learning_rate"] = format_double(config.train.learning_rate);
  out["train.optimizer"] =
      config.train.optimizer == Optimizer::adam ? "adam" : "sgd_momentum";
  out["train.momentum"] = format_double(config.train.momentum);
  out["train.beta1"] = format_double(config.train.beta1);
  out["train.beta2"] = format_double(config.train.beta2);
  out["train.adam_epsilon"] = format_double(config.train.adam_epsilon);
  out["train.seed"] = std::to_string(config.train.seed);
  out["train.early_stop_patience"] = std::to_string(config.train.early_stop_patience);
  out["train.shuffle"] = config.train.shuffle ? "true" : "false";
  out["train.class_weights"] = config.train.class_weights ? "true" : "false";
  out["train.val_fraction"] = format_double(config.val_fraction);
  out["knn.k"] = std::to_string(config.knn_k);
  out["rf.n_trees"] = std::to_string(config.rf_trees);
  out["rf.max_depth"] = std::to_string(config.rf_depth);
  out["svm.c"] = format_double(config.svm_c);
  out["svm.gamma"] = format_double(config.svm_gamma);
  out["svm.tol"] = format_double(config.svm_tol);
  out["svm.max_rows"] = std::to_string(config.svm_max_rows);
  return out;
}

}  // namespace nids
