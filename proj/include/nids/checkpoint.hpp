#pragma once

// Preprocessing artifacts and model checkpoints in the shared container
// format. A checkpoint is self-describing: it carries the model config, all
// weights, the fitted preprocessing state and the label space, so prediction
// on raw CSVs needs no external context.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nids/baselines.hpp"
#include "nids/flow.hpp"
#include "nids/model.hpp"
#include "nids/preprocess.hpp"
#include "nids/serialize.hpp"
#include "nids/trainer.hpp"

namespace nids {

namespace ckpt_detail {

using nlohmann::json;

inline json label_space_to_json(const LabelSpace& space) {
  json j;
  j["names"] = space.names;
  if (space.benign_id)
    j["benign_id"] = *space.benign_id;
  else
    j["benign_id"] = nullptr;
  return j;
}

inline LabelSpace label_space_from_json(const json& j) {
  LabelSpace space;
  space.names = j.at("names").get<std::vector<std::string>>();
  if (!j.at("benign_id").is_null())
    space.benign_id = j.at("benign_id").get<std::size_t>();
  return space;
}

inline std::string padding_name(tc::Padding p) {
  return p == tc::Padding::same ? "same" : "valid";
}

inline tc::Padding padding_from(const std::string& s) {
  if (s == "same") return tc::Padding::same;
  if (s == "valid") return tc::Padding::valid;
  fail("UnknownVersion", "unrecognized padding '" + s + "'");
}

inline json model_config_to_json(const ModelConfig& c) {
  json j;
  j["arch"] = c.arch == Arch::cnn_lstm ? "cnn_lstm"
              : c.arch == Arch::cnn_only ? "cnn_only"
                                         : "mlp";
  j["input_length"] = c.input_length;
  json blocks = json::array();
  for (const ConvBlockSpec& b : c.conv_blocks)
    blocks.push_back({{"filters", b.filters},
                      {"kernel", b.kernel},
                      {"padding", padding_name(b.padding)}});
  j["conv_blocks"] = blocks;
  j["pool_width"] = c.pool_width;
  j["dropout_rate"] = c.dropout_rate;
  j["lstm_hidden"] = c.lstm_hidden;
  j["lstm_steps"] = c.lstm_steps;
  j["head"] = c.head == HeadKind::svm_margin ? "svm_margin" : "softmax_xent";
  j["n_classes"] = c.n_classes;
  j["l2_head"] = c.l2_head;
  j["mlp_widths"] = c.mlp_widths;
  return j;
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  std::string arch = j.at("arch").get<std::string>();
  c.arch = arch == "cnn_lstm" ? Arch::cnn_lstm
           : arch == "cnn_only" ? Arch::cnn_only
                                : Arch::mlp;
  c.input_length = j.at("input_length").get<std::size_t>();
  c.conv_blocks.clear();
  for (const json& b : j.at("conv_blocks"))
    c.conv_blocks.push_back({b.at("filters").get<std::size_t>(),
                             b.at("kernel").get<std::size_t>(),
                             padding_from(b.at("padding").get<std::string>())});
  c.pool_width = j.at("pool_width").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  c.lstm_steps = j.at("lstm_steps").get<std::size_t>();
  c.head = j.at("head").get<std::string>() == "svm_margin"
               ? HeadKind::svm_margin
               : HeadKind::softmax_xent;
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.l2_head = j.at("l2_head").get<double>();
  c.mlp_widths = j.at("mlp_widths").get<std::vector<std::size_t>>();
  return c;
}

inline json train_config_to_json(const TrainConfig& t) {
  json j;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["learning_rate"] = t.learning_rate;
  j["optimizer"] = t.optimizer == Optimizer::adam ? "adam" : "sgd_momentum";
  j["momentum"] = t.momentum;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["adam_epsilon"] = t.adam_epsilon;
  j["seed"] = t.seed;
  j["early_stop_patience"] = t.early_stop_patience;
  j["shuffle"] = t.shuffle;
  j["class_weights"] = t.class_weights;
  return j;
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig t;
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.epochs = j.at("epochs").get<std::size_t>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.optimizer = j.at("optimizer").get<std::string>() == "adam"
                    ? Optimizer::adam
                    : Optimizer::sgd_momentum;
  t.momentum = j.at("momentum").get<double>();
  t.beta1 = j.at("beta1").get<double>();
  t.beta2 = j.at("beta2").get<double>();
  t.adam_epsilon = j.at("adam_epsilon").get<double>();
  t.seed = j.at("seed").get<uint64_t>();
  t.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
  t.shuffle = j.at("shuffle").get<bool>();
  t.class_weights = j.at("class_weights").get<bool>();
  return t;
}

inline void write_minmax_pca(SectionWriter& w, const MinMaxParams& minmax,
                             const PcaModel& pca) {
  w.add_f64("minmax/min", minmax.min);
  w.add_f64("minmax/max", minmax.max);
  w.add_f64("pca/mean", pca.mean);
  w.add_f64("pca/components", pca.components);
  w.add_f64("pca/ratios", pca.explained_variance_ratio);
  w.manifest["pca"] = {{"k", pca.k}, {"d", pca.d}};
}

inline void read_minmax_pca(const SectionReader& r, MinMaxParams& minmax,
                            PcaModel& pca) {
  minmax.min = r.f64("minmax/min");
  minmax.max = r.f64("minmax/max");
  pca.mean = r.f64("pca/mean");
  pca.components = r.f64("pca/components");
  pca.explained_variance_ratio = r.f64("pca/ratios");
  pca.k = r.manifest.at("pca").at("k").get<std::size_t>();
  pca.d = r.manifest.at("pca").at("d").get<std::size_t>();
}

inline void write_params(SectionWriter& w, const NetworkParams& params,
                         const std::string& prefix) {
  for (const auto& [name, tensor] : params.named())
    w.add_f64(prefix + name, tensor.values());
}

// Shapes come from build(config); the sections only need matching lengths.
inline NetworkParams read_params(const SectionReader& r,
                                 const ModelConfig& config,
                                 const std::string& prefix) {
  NetworkParams params = build(config, 0);
  for (auto& [name, tensor] : params.named()) {
    std::vector<double> values = r.f64(prefix + name);
    if (values.size() != tensor.size())
      fail("Truncated", "parameter '" + name + "' has " +
                            std::to_string(values.size()) + " values, expected " +
                            std::to_string(tensor.size()));
    std::copy(values.begin(), values.end(), tensor.data());
  }
  return params;
}

}  // namespace ckpt_detail

// ---------------------------------------------------------------------------
// Preprocessing artifact

struct PrepArtifact {
  LabelSpace labels;
  FlowTable train;  // post-PCA features, ids aligned to `labels`
  FlowTable test;
  MinMaxParams minmax;
  PcaModel pca;
  CleanReport clean_report;
  SplitSpec split;
  std::vector<std::string> input_feature_names;  // post-drop, pre-PCA order
  std::vector<std::string> dropped_columns;
};

inline std::string artifact_to_bytes(const PrepArtifact& a) {
  SectionWriter w;
  w.manifest["kind"] = "prep-artifact";
  w.manifest["labels"] = ckpt_detail::label_space_to_json(a.labels);
  w.manifest["clean_report"] = {
      {"dropped_columns", a.clean_report.dropped_columns},
      {"dropped_rows", a.clean_report.dropped_rows},
      {"nonfinite_cells", a.clean_report.nonfinite_cells}};
  w.manifest["split"] = {{"test_fraction", a.split.test_fraction},
                         {"seed", a.split.seed},
                         {"stratified", a.split.stratified}};
  w.manifest["input_feature_names"] = a.input_feature_names;
  w.manifest["dropped_columns"] = a.dropped_columns;
  w.manifest["train_rows"] = a.train.n_rows;
  w.manifest["test_rows"] = a.test.n_rows;
  w.add_f64("train/x", a.train.features);
  w.add_i32("train/y", a.train.labels);
  w.add_f64("test/x", a.test.features);
  w.add_i32("test/y", a.test.labels);
  ckpt_detail::write_minmax_pca(w, a.minmax, a.pca);
  return w.finish();
}

inline void save_artifact(const PrepArtifact& a,
                          const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("FileNotFound", "cannot write " + path.string());
  std::string bytes = artifact_to_bytes(a);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline PrepArtifact artifact_from_reader(const SectionReader& r) {
  if (r.manifest.value("kind", "") != "prep-artifact")
    fail("UnknownVersion", "container is not a preprocessing artifact");
  PrepArtifact a;
  a.labels = ckpt_detail::label_space_from_json(r.manifest.at("labels"));
  const auto& cr = r.manifest.at("clean_report");
  a.clean_report.dropped_columns =
      cr.at("dropped_columns").get<std::vector<std::string>>();
  a.clean_report.dropped_rows = cr.at("dropped_rows").get<std::size_t>();
  a.clean_report.nonfinite_cells = cr.at("nonfinite_cells").get<std::size_t>();
  a.split.test_fraction = r.manifest.at("split").at("test_fraction").get<double>();
  a.split.seed = r.manifest.at("split").at("seed").get<uint64_t>();
  a.split.stratified = r.manifest.at("split").at("stratified").get<bool>();
  a.input_feature_names =
      r.manifest.at("input_feature_names").get<std::vector<std::string>>();
  a.dropped_columns =
      r.manifest.at("dropped_columns").get<std::vector<std::string>>();
  ckpt_detail::read_minmax_pca(r, a.minmax, a.pca);

  auto load_table = [&](const std::string& prefix, std::size_t rows) {
    FlowTable t;
    t.features = r.f64(prefix + "/x");
    t.labels = r.i32(prefix + "/y");
    t.n_cols = a.pca.k;
    t.n_rows = rows;
    if (t.features.size() != t.n_rows * t.n_cols ||
        t.labels.size() != t.n_rows)
      fail("Truncated", "artifact table '" + prefix + "' has wrong extent");
    t.label_names = a.labels.names;
    for (std::size_t i = 0; i < t.n_cols; ++i)
      t.feature_names.push_back("PC" + std::to_string(i + 1));
    return t;
  };
  a.train = load_table("train", r.manifest.at("train_rows").get<std::size_t>());
  a.test = load_table("test", r.manifest.at("test_rows").get<std::size_t>());
  return a;
}

inline PrepArtifact load_artifact(const std::filesystem::path& path) {
  return artifact_from_reader(SectionReader::from_file(path));
}

// Human-readable dump of the fitted preprocessing state.
inline void dump_preprocessing_text(const PrepArtifact& a, std::ostream& out) {
  out << "preprocessing artifact\n";
  out << "  dropped columns:";
  for (const std::string& c : a.clean_report.dropped_columns) out << ' ' << c;
  out << "\n  dropped rows: " << a.clean_report.dropped_rows
      << "\n  non-finite cells: " << a.clean_report.nonfinite_cells << '\n';
  out << "  split: test_fraction=" << a.split.test_fraction
      << " seed=" << a.split.seed
      << " stratified=" << (a.split.stratified ? "true" : "false") << '\n';
  out << "  classes (" << a.labels.names.size() << "):";
  for (const std::string& n : a.labels.names) out << ' ' << n;
  out << '\n';
  out << "  pca: " << a.pca.d << " -> " << a.pca.k << " components\n";
  out << "  min-max over " << a.minmax.min.size() << " features\n";
  out << "  rows: train=" << a.train.n_rows << " test=" << a.test.n_rows << '\n';
}

// ---------------------------------------------------------------------------
// Model checkpoint

struct Checkpoint {
  std::string kind;       // proposed | cnn | cnn-lstm-softmax | dnn5 | knn | rf | rbf-head
  ModelConfig config;     // net kinds; for rbf-head the base network's config
  NetworkParams params;   // net kinds and rbf-head base
  KnnModel knn;
  ForestModel forest;
  RbfSvmModel svm;        // rbf-head only
  MinMaxParams minmax;
  PcaModel pca;
  LabelSpace labels;
  std::vector<std::string> input_feature_names;
  std::vector<std::string> dropped_columns;
  TrainConfig train_config;
  TrainHistory history;
  std::map<std::string, std::string> run_config_echo;

  bool is_net() const {
    return kind == "proposed" || kind == "cnn" || kind == "cnn-lstm-softmax" ||
           kind == "dnn5";
  }
};

inline std::string checkpoint_to_bytes(const Checkpoint& c) {
  SectionWriter w;
  w.manifest["kind"] = c.kind;
  w.manifest["labels"] = ckpt_detail::label_space_to_json(c.labels);
  w.manifest["input_feature_names"] = c.input_feature_names;
  w.manifest["dropped_columns"] = c.dropped_columns;
  w.manifest["train_config"] = ckpt_detail::train_config_to_json(c.train_config);
  w.manifest["run_config"] = c.run_config_echo;
  {
    nlohmann::json hist;
    hist["best_epoch"] = c.history.best_epoch;
    hist["best_val_accuracy"] = c.history.best_val_accuracy;
    hist["epochs"] = c.history.epochs.size();
    w.manifest["history"] = hist;
    std::vector<double> loss, acc;
    for (const EpochStats& e : c.history.epochs) {
      loss.push_back(e.train_loss);
      acc.push_back(e.val_accuracy);
    }
    w.add_f64("history/train_loss", loss);
    w.add_f64("history/val_accuracy", acc);
  }
  ckpt_detail::write_minmax_pca(w, c.minmax, c.pca);

  if (c.is_net() || c.kind == "rbf-head") {
    w.manifest["model_config"] = ckpt_detail::model_config_to_json(c.config);
    ckpt_detail::write_params(w, c.params, "param/");
  }
  if (c.kind == "knn") {
    w.manifest["knn"] = {{"n", c.knn.n}, {"d", c.knn.d}, {"k", c.knn.k}};
    w.add_f64("knn/x", c.knn.train);
    w.add_i32("knn/y", c.knn.labels);
  }
  if (c.kind == "rf") {
    w.manifest["forest"] = {{"n_classes", c.forest.n_classes},
                            {"d", c.forest.d},
                            {"max_depth", c.forest.max_depth},
                            {"seed", c.forest.seed},
                            {"n_trees", c.forest.trees.size()}};
    std::vector<uint32_t> sizes;
    std::vector<int32_t> feature, leaf;
    std::vector<double> threshold;
    std::vector<uint32_t> left, right;
    for (const DecisionTree& tree : c.forest.trees) {
      sizes.push_back(static_cast<uint32_t>(tree.nodes.size()));
      for (const TreeNode& n : tree.nodes) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        leaf.push_back(n.leaf_label);
      }
    }
    w.add_u32("rf/tree_sizes", sizes);
    w.add_i32("rf/feature", feature);
    w.add_f64("rf/threshold", threshold);
    w.add_u32("rf/left", left);
    w.add_u32("rf/right", right);
    w.add_i32("rf/leaf", leaf);
  }
  if (c.kind == "rbf-head") {
    w.manifest["svm"] = {{"gamma", c.svm.gamma},
                         {"c", c.svm.c},
                         {"d", c.svm.d},
                         {"n_classes", c.svm.n_classes},
                         {"machines", c.svm.machines.size()}};
    std::vector<double> biases;
    for (std::size_t m = 0; m < c.svm.machines.size(); ++m) {
      const BinarySvm& machine = c.svm.machines[m];
      std::string p = "svm/m" + std::to_string(m) + "/";
      w.add_f64(p + "sv", machine.support_vectors);
      w.add_f64(p + "alpha", machine.alpha);
      w.add_f64(p + "sign", machine.sign);
      w.add_u32(p + "index", machine.sv_index);
      biases.push_back(machine.bias);
    }
    w.add_f64("svm/bias", biases);
  }
  return w.finish();
}

inline void save_checkpoint(const Checkpoint& c,
                            const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("FileNotFound", "cannot write " + path.string());
  std::string bytes = checkpoint_to_bytes(c);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint checkpoint_from_reader(const SectionReader& r) {
  Checkpoint c;
  c.kind = r.manifest.value("kind", "");
  if (c.kind.empty() || c.kind == "prep-artifact")
    fail("UnknownVersion", "container is not a model checkpoint");
  c.labels = ckpt_detail::label_space_from_json(r.manifest.at("labels"));
  c.input_feature_names =
      r.manifest.at("input_feature_names").get<std::vector<std::string>>();
  c.dropped_columns =
      r.manifest.at("dropped_columns").get<std::vector<std::string>>();
  c.train_config =
      ckpt_detail::train_config_from_json(r.manifest.at("train_config"));
  c.run_config_echo = r.manifest.at("run_config")
                          .get<std::map<std::string, std::string>>();
  {
    std::vector<double> loss = r.f64("history/train_loss");
    std::vector<double> acc = r.f64("history/val_accuracy");
    for (std::size_t i = 0; i < loss.size(); ++i)
      c.history.epochs.push_back({i + 1, loss[i], acc[i]});
    c.history.best_epoch = r.manifest.at("history").at("best_epoch").get<std::size_t>();
    c.history.best_val_accuracy =
        r.manifest.at("history").at("best_val_accuracy").get<double>();
  }
  ckpt_detail::read_minmax_pca(r, c.minmax, c.pca);

  if (c.is_net() || c.kind == "rbf-head") {
    c.config = ckpt_detail::model_config_from_json(r.manifest.at("model_config"));
    c.params = ckpt_detail::read_params(r, c.config, "param/");
  }
  if (c.kind == "knn") {
    c.knn.train = r.f64("knn/x");
    c.knn.labels = r.i32("knn/y");
    c.knn.n = r.manifest.at("knn").at("n").get<std::size_t>();
    c.knn.d = r.manifest.at("knn").at("d").get<std::size_t>();
    c.knn.k = r.manifest.at("knn").at("k").get<std::size_t>();
  }
  if (c.kind == "rf") {
    const auto& fm = r.manifest.at("forest");
    c.forest.n_classes = fm.at("n_classes").get<std::size_t>();
    c.forest.d = fm.at("d").get<std::size_t>();
    c.forest.max_depth = fm.at("max_depth").get<std::size_t>();
    c.forest.seed = fm.at("seed").get<uint64_t>();
    std::vector<uint32_t> sizes = r.u32("rf/tree_sizes");
    std::vector<int32_t> feature = r.i32("rf/feature");
    std::vector<double> threshold = r.f64("rf/threshold");
    std::vector<uint32_t> left = r.u32("rf/left");
    std::vector<uint32_t> right = r.u32("rf/right");
    std::vector<int32_t> leaf = r.i32("rf/leaf");
    std::size_t at = 0;
    for (uint32_t size : sizes) {
      DecisionTree tree;
      for (uint32_t i = 0; i < size; ++i, ++at)
        tree.nodes.push_back({feature[at], threshold[at], left[at], right[at],
                              leaf[at]});
      c.forest.trees.push_back(std::move(tree));
    }
  }
  if (c.kind == "rbf-head") {
    const auto& sm = r.manifest.at("svm");
    c.svm.gamma = sm.at("gamma").get<double>();
    c.svm.c = sm.at("c").get<double>();
    c.svm.d = sm.at("d").get<std::size_t>();
    c.svm.n_classes = sm.at("n_classes").get<std::size_t>();
    std::size_t machines = sm.at("machines").get<std::size_t>();
    std::vector<double> biases = r.f64("svm/bias");
    for (std::size_t m = 0; m < machines; ++m) {
      std::string p = "svm/m" + std::to_string(m) + "/";
      BinarySvm machine;
      machine.support_vectors = r.f64(p + "sv");
      machine.alpha = r.f64(p + "alpha");
      machine.sign = r.f64(p + "sign");
      machine.sv_index = r.u32(p + "index");
      machine.bias = biases[m];
      c.svm.machines.push_back(std::move(machine));
    }
  }
  return c;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_reader(SectionReader::from_file(path));
}

}  // namespace nids
