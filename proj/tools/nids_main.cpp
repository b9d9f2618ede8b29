// nids: flow-record intrusion-detection pipeline.
//
//   nids synth       write a synthetic CICIDS2017-layout CSV corpus
//   nids preprocess  clean + split + min-max + PCA -> artifact file
//   nids train       fit a model on an artifact -> checkpoint file
//   nids evaluate    metrics of a checkpoint on an artifact's test split
//   nids predict     label raw CSV flows with a checkpoint
//   nids compare     accuracy table with deltas against a proposed model
//
// Exit codes: 0 success, 2 usage/input error, 3 non-finite training loss.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nids/baselines.hpp"
#include "nids/checkpoint.hpp"
#include "nids/evaluate.hpp"
#include "nids/flow.hpp"
#include "nids/model.hpp"
#include "nids/preprocess.hpp"
#include "nids/run_config.hpp"
#include "nids/serialize.hpp"
#include "nids/synthetic.hpp"
#include "nids/trainer.hpp"

namespace fs = std::filesystem;
using namespace nids;

namespace {

void echo_config(const RunConfig& config, std::ostream& out) {
  for (const auto& [key, value] : effective_config(config))
    out << key << " = " << value << '\n';
}

int run_synth(const std::string& out_dir, std::size_t rows, std::size_t files,
              uint64_t seed, double nonfinite) {
  SynthOptions options;
  options.rows = rows;
  options.seed = seed;
  options.nonfinite_fraction = nonfinite;
  auto paths = write_synthetic_corpus(out_dir, options, files);
  std::cout << "wrote " << paths.size() << " file(s), " << rows
            << " rows total under " << out_dir << '\n';
  return 0;
}

int run_preprocess(const std::string& data, const std::string& out,
                   RunConfig config) {
  FlowTable raw = load_csv_dir(data, "Label");
  std::cout << "loaded " << raw.n_rows << " rows, " << raw.n_cols
            << " feature columns\n";

  auto [cleaned, report] = clean(raw, config.drop_columns);
  std::cout << "clean: dropped " << report.dropped_columns.size()
            << " column(s), " << report.dropped_rows << " row(s), "
            << report.nonfinite_cells << " non-finite cell(s); "
            << cleaned.n_cols << " features remain\n";

  LabelSpace space = build_label_space({&cleaned});
  FlowTable aligned = align_labels(cleaned, space);
  auto [train_part, test_part] = stratified_split(aligned, config.split);

  MinMaxParams minmax = fit_minmax(train_part);
  FlowTable train_norm = apply_minmax(train_part, minmax);
  FlowTable test_norm = apply_minmax(test_part, minmax);

  PcaModel pca = fit_pca(train_norm, config.pca_k);
  PrepArtifact artifact;
  artifact.labels = space;
  artifact.train = transform_pca(train_norm, pca);
  artifact.test = transform_pca(test_norm, pca);
  artifact.minmax = minmax;
  artifact.pca = pca;
  artifact.clean_report = report;
  artifact.split = config.split;
  artifact.input_feature_names = cleaned.feature_names;
  artifact.dropped_columns = config.drop_columns;
  save_artifact(artifact, out);

  std::cout << "explained variance (components, cumulative ratio):\n";
  for (const auto& [k, ratio] : explained_variance_curve(pca))
    std::cout << "  " << k << '\t' << ratio << '\n';
  std::cout << "split: " << artifact.train.n_rows << " train / "
            << artifact.test.n_rows << " test rows, " << pca.k
            << " components\n";
  echo_config(config, std::cout);
  std::cout << "artifact written to " << out << '\n';
  return 0;
}

ModelConfig config_for_tag(const std::string& tag, const RunConfig& run,
                           std::size_t input_length, std::size_t n_classes) {
  ModelConfig c = run.model;
  c.input_length = input_length;
  c.n_classes = n_classes;
  if (tag == "proposed") {
    c.arch = Arch::cnn_lstm;
    c.head = HeadKind::svm_margin;
  } else if (tag == "cnn") {
    c.arch = Arch::cnn_only;
    c.head = HeadKind::softmax_xent;
  } else if (tag == "cnn-lstm-softmax") {
    c.arch = Arch::cnn_lstm;
    c.head = HeadKind::softmax_xent;
  } else if (tag == "dnn5") {
    c.arch = Arch::mlp;
    c.head = HeadKind::softmax_xent;
  } else {
    fail("UnknownModel",
         "model tag '" + tag +
             "' is not proposed|cnn|cnn-lstm-softmax|dnn5|knn|rf|rbf-head");
  }
  return validate(c);
}

// Stratified subsample of roughly max_rows rows (keeps the class mix).
FlowTable cap_rows(const FlowTable& table, std::size_t max_rows, uint64_t seed) {
  if (table.n_rows <= max_rows) return table;
  double keep = static_cast<double>(max_rows) / static_cast<double>(table.n_rows);
  // The split's "test" side carries the keep fraction.
  auto [rest, kept] = stratified_split(table, {keep, seed, true});
  (void)rest;
  return kept;
}

int run_train(const std::string& prep, const std::string& tag,
              const std::string& out, const std::string& base,
              RunConfig config) {
  PrepArtifact artifact = load_artifact(prep);
  std::size_t n_classes = artifact.labels.n_classes();
  std::size_t width = artifact.pca.k;

  Checkpoint ckpt;
  ckpt.kind = tag;
  ckpt.minmax = artifact.minmax;
  ckpt.pca = artifact.pca;
  ckpt.labels = artifact.labels;
  ckpt.input_feature_names = artifact.input_feature_names;
  ckpt.dropped_columns = artifact.dropped_columns;
  ckpt.train_config = config.train;

  if (tag == "knn") {
    ckpt.knn = knn_fit(artifact.train, config.knn_k);
    config.model.n_classes = n_classes;
    config.model.input_length = width;
    ckpt.run_config_echo = effective_config(config);
    save_checkpoint(ckpt, out);
    double acc = accuracy_of(artifact.test.labels,
                             knn_predict(ckpt.knn, artifact.test));
    std::cout << "knn (k=" << config.knn_k << ") stored " << ckpt.knn.n
              << " rows; test accuracy " << acc << '\n';
  } else if (tag == "rf") {
    ForestOptions opts;
    opts.n_trees = config.rf_trees;
    opts.max_depth = config.rf_depth;
    opts.seed = config.train.seed;
    ckpt.forest = forest_fit(artifact.train, opts);
    config.model.n_classes = n_classes;
    config.model.input_length = width;
    ckpt.run_config_echo = effective_config(config);
    save_checkpoint(ckpt, out);
    double acc = accuracy_of(artifact.test.labels,
                             forest_predict(ckpt.forest, artifact.test));
    std::cout << "random forest (" << config.rf_trees
              << " trees) test accuracy " << acc << '\n';
  } else if (tag == "rbf-head") {
    if (base.empty())
      fail("MissingBase", "--base checkpoint required for the rbf-head model");
    Checkpoint base_ckpt = load_checkpoint(base);
    if (!base_ckpt.is_net())
      fail("UnknownModel", "--base must be a tensor-backed checkpoint");
    if (base_ckpt.config.input_length != width)
      fail("DimensionMismatch",
           "base expects width " + std::to_string(base_ckpt.config.input_length) +
               ", artifact provides " + std::to_string(width));
    FlowTable fit_rows =
        cap_rows(artifact.train, config.svm_max_rows, config.train.seed);
    std::size_t feature_dim = 0;
    std::vector<double> feats = penultimate_table(
        base_ckpt.params, base_ckpt.config, fit_rows, feature_dim);
    ckpt.svm = rbf_svm_fit(feats, fit_rows.labels, feature_dim, config.svm_c,
                           config.svm_gamma, config.svm_tol);
    ckpt.config = base_ckpt.config;
    ckpt.params = base_ckpt.params;
    config.model = base_ckpt.config;
    ckpt.run_config_echo = effective_config(config);
    save_checkpoint(ckpt, out);
    std::size_t test_dim = 0;
    std::vector<double> test_feats = penultimate_table(
        base_ckpt.params, base_ckpt.config, artifact.test, test_dim);
    double acc = accuracy_of(artifact.test.labels,
                             rbf_svm_predict(ckpt.svm, test_feats, test_dim));
    std::cout << "rbf-head over " << fit_rows.n_rows
              << " frozen-feature rows; test accuracy " << acc << '\n';
  } else {
    ModelConfig model_config = config_for_tag(tag, config, width, n_classes);
    config.model = model_config;
    NetworkParams params = build(model_config, config.train.seed);

    SplitSpec val_spec{config.val_fraction,
                       mix_seed(config.train.seed, 0x76616c), true};
    auto [fit_part, val_part] = stratified_split(artifact.train, val_spec);
    TrainHistory history =
        train(params, model_config, fit_part, val_part, config.train);

    ckpt.config = model_config;
    ckpt.params = params;
    ckpt.history = history;
    ckpt.run_config_echo = effective_config(config);
    save_checkpoint(ckpt, out);
    std::cout << "trained " << history.epochs.size() << " epoch(s); best epoch "
              << history.best_epoch << "; final val accuracy "
              << history.best_val_accuracy << '\n';
  }
  echo_config(config, std::cout);
  std::cout << "checkpoint written to " << out << '\n';
  return 0;
}

std::vector<int32_t> checkpoint_predict(const Checkpoint& ckpt,
                                        const FlowTable& data) {
  if (ckpt.kind == "knn") {
    if (data.n_cols != ckpt.knn.d)
      fail("DimensionMismatch", "test width " + std::to_string(data.n_cols) +
                                    " vs knn width " + std::to_string(ckpt.knn.d));
    return knn_predict(ckpt.knn, data);
  }
  if (ckpt.kind == "rf") {
    if (data.n_cols != ckpt.forest.d)
      fail("DimensionMismatch", "test width " + std::to_string(data.n_cols) +
                                    " vs forest width " +
                                    std::to_string(ckpt.forest.d));
    return forest_predict(ckpt.forest, data);
  }
  if (ckpt.kind == "rbf-head") {
    if (data.n_cols != ckpt.config.input_length)
      fail("DimensionMismatch", "test width " + std::to_string(data.n_cols) +
                                    " vs model input " +
                                    std::to_string(ckpt.config.input_length));
    std::size_t dim = 0;
    std::vector<double> feats =
        penultimate_table(ckpt.params, ckpt.config, data, dim);
    return rbf_svm_predict(ckpt.svm, feats, dim);
  }
  if (data.n_cols != ckpt.config.input_length)
    fail("DimensionMismatch", "test width " + std::to_string(data.n_cols) +
                                  " vs model input " +
                                  std::to_string(ckpt.config.input_length));
  return predict_table(ckpt.params, ckpt.config, data);
}

int run_evaluate(const std::string& ckpt_path, const std::string& prep,
                 const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  PrepArtifact artifact = load_artifact(prep);
  if (ckpt.labels.names != artifact.labels.names)
    fail("DimensionMismatch",
         "checkpoint and artifact disagree on the label space");

  std::vector<int32_t> predicted = checkpoint_predict(ckpt, artifact.test);
  Metrics m = compute_metrics(artifact.test.labels, predicted,
                              artifact.labels.n_classes());
  write_metrics_text(m, artifact.labels.names, std::cout);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream confusion(fs::path(out_dir) / "confusion.csv");
    write_confusion_csv(m, artifact.labels.names, confusion);
    std::ofstream history_csv(fs::path(out_dir) / "history.csv");
    write_history_csv(ckpt.history, history_csv);
    std::cout << "wrote " << (fs::path(out_dir) / "confusion.csv").string()
              << " and history.csv\n";
  }
  return 0;
}

int run_predict(const std::string& ckpt_path, const std::string& data,
                const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  FlowTable raw = load_csv_dir(data, "Label");
  auto [cleaned, report] = clean(raw, ckpt.dropped_columns);
  if (cleaned.feature_names != ckpt.input_feature_names)
    fail("DimensionMismatch",
         "input columns do not match the checkpoint's training layout");
  FlowTable normalized = apply_minmax(cleaned, ckpt.minmax);
  FlowTable reduced = transform_pca(normalized, ckpt.pca);
  std::vector<int32_t> predicted = checkpoint_predict(ckpt, reduced);

  std::ofstream f(out);
  if (!f) fail("FileNotFound", "cannot write " + out);
  f << "row,predicted_label\n";
  for (std::size_t i = 0; i < predicted.size(); ++i)
    f << i << ',' << ckpt.labels.names[static_cast<std::size_t>(predicted[i])]
      << '\n';
  std::cout << "predicted " << predicted.size() << " rows ("
            << report.dropped_rows
            << " dropped for non-finite cells); written to " << out << '\n';
  return 0;
}

int run_compare(const std::string& results_path, const std::string& proposed,
                const std::string& csv_out) {
  std::ifstream in(results_path);
  if (!in) fail("FileNotFound", "cannot open " + results_path);
  std::map<std::string, double> results;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string text = csv_detail::trim(line);
    if (text.empty() || text[0] == '#') continue;
    // Model names may themselves contain '=' ("KNN (k=5)"): split at the last.
    std::size_t eq = text.rfind('=');
    if (eq == std::string::npos)
      fail("BadValue", results_path + ":" + std::to_string(line_no) +
                           ": expected model = accuracy");
    std::string name = csv_detail::trim(text.substr(0, eq));
    std::string value = csv_detail::trim(text.substr(eq + 1));
    if (!value.empty() && value.back() == '%') value.pop_back();
    try {
      results[name] = runcfg_detail::parse_double(value);
    } catch (const Error&) {
      fail("BadValue", results_path + ":" + std::to_string(line_no) + ": '" +
                           value + "' is not a number");
    }
  }
  ComparisonReport report = comparison_table(results, proposed);
  write_comparison_text(report, std::cout);
  if (!csv_out.empty()) {
    std::ofstream f(csv_out);
    write_comparison_csv(report, f);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flow-record intrusion detection pipeline"};
  app.require_subcommand(1);

  std::string config_file;

  auto* synth = app.add_subcommand("synth", "write a synthetic CSV corpus");
  std::string synth_out = "data";
  std::size_t synth_rows = 20000, synth_files = 1;
  uint64_t synth_seed = 1;
  double synth_nonfinite = 0.004;
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--rows", synth_rows, "total rows");
  synth->add_option("--files", synth_files, "number of daily files");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--nonfinite", synth_nonfinite,
                    "fraction of rows given inf/NaN cells");

  auto* prep = app.add_subcommand("preprocess",
                                  "clean, split, normalize, PCA -> artifact");
  std::string prep_data, prep_out = "prep.nids";
  prep->add_option("--data", prep_data, "CSV file or directory")->required();
  prep->add_option("--out", prep_out, "artifact output path");
  prep->add_option("--config", config_file, "key=value config file");
  std::size_t opt_pca = 0;
  double opt_fraction = -1.0;
  int64_t opt_seed = -1;
  prep->add_option("--pca", opt_pca, "principal components to keep");
  prep->add_option("--test-fraction", opt_fraction, "test split fraction");
  prep->add_option("--seed", opt_seed, "split seed");
  std::string opt_drop;
  prep->add_option("--drop", opt_drop, "comma-separated columns to drop");

  auto* tr = app.add_subcommand("train", "train a model on an artifact");
  std::string tr_prep, tr_model = "proposed", tr_out = "model.nids", tr_base;
  tr->add_option("--prep", tr_prep, "preprocessing artifact")->required();
  tr->add_option("--model", tr_model,
                 "proposed|cnn|cnn-lstm-softmax|dnn5|knn|rf|rbf-head");
  tr->add_option("--out", tr_out, "checkpoint output path");
  tr->add_option("--config", config_file, "key=value config file");
  tr->add_option("--base", tr_base, "base checkpoint (rbf-head only)");
  int64_t tr_seed = -1, tr_epochs = -1, tr_batch = -1;
  double tr_lr = -1.0;
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_option("--epochs", tr_epochs, "max epochs");
  tr->add_option("--batch", tr_batch, "batch size");
  tr->add_option("--lr", tr_lr, "learning rate");

  auto* ev =
      app.add_subcommand("evaluate", "metrics on an artifact's test split");
  std::string ev_ckpt, ev_prep, ev_out;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  ev->add_option("--prep", ev_prep, "preprocessing artifact")->required();
  ev->add_option("--out", ev_out, "directory for confusion/history CSVs");

  auto* pr = app.add_subcommand("predict", "label raw CSV flows");
  std::string pr_ckpt, pr_data, pr_out = "predictions.csv";
  pr->add_option("--ckpt", pr_ckpt, "checkpoint")->required();
  pr->add_option("--data", pr_data, "CSV file or directory")->required();
  pr->add_option("--out", pr_out, "predictions CSV path");

  auto* cp = app.add_subcommand("compare", "accuracy comparison table");
  std::string cp_results, cp_proposed = "CNN-LSTM-SVM", cp_csv;
  cp->add_option("--results", cp_results, "file of model = accuracy lines")
      ->required();
  cp->add_option("--proposed", cp_proposed, "name of the proposed model");
  cp->add_option("--csv", cp_csv, "also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig config;
    if (!config_file.empty()) load_config_file(config, config_file);

    if (synth->parsed())
      return run_synth(synth_out, synth_rows, synth_files, synth_seed,
                       synth_nonfinite);
    if (prep->parsed()) {
      if (prep->count("--pca")) config.pca_k = opt_pca;
      if (opt_fraction >= 0.0) config.split.test_fraction = opt_fraction;
      if (opt_seed >= 0) config.split.seed = static_cast<uint64_t>(opt_seed);
      if (!opt_drop.empty())
        config.drop_columns = runcfg_detail::split_list(opt_drop);
      return run_preprocess(prep_data, prep_out, config);
    }
    if (tr->parsed()) {
      if (tr_seed >= 0) config.train.seed = static_cast<uint64_t>(tr_seed);
      if (tr_epochs > 0) config.train.epochs = static_cast<std::size_t>(tr_epochs);
      if (tr_batch > 0) config.train.batch_size = static_cast<std::size_t>(tr_batch);
      if (tr_lr >= 0.0) config.train.learning_rate = tr_lr;
      return run_train(tr_prep, tr_model, tr_out, tr_base, config);
    }
    if (ev->parsed()) return run_evaluate(ev_ckpt, ev_prep, ev_out);
    if (pr->parsed()) return run_predict(pr_ckpt, pr_data, pr_out);
    if (cp->parsed()) return run_compare(cp_results, cp_proposed, cp_csv);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.name() == "NonFiniteLoss" ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 2;
  }
}
