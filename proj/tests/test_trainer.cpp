#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "nids/checkpoint.hpp"
#include "nids/trainer.hpp"

using namespace nids;

namespace {

auto named(const std::string& name) {
  return Catch::Matchers::Predicate<Error>(
      [name](const Error& e) { return e.name() == name; });
}

// Two linearly separable blobs across `width` features.
FlowTable blob_data(std::size_t n, std::size_t width, uint64_t seed) {
  Rng rng(seed);
  FlowTable t;
  t.n_cols = width;
  t.label_names = {"lo", "hi"};
  for (std::size_t c = 0; c < width; ++c)
    t.feature_names.push_back("f" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    int32_t cls = static_cast<int32_t>(i % 2);
    for (std::size_t c = 0; c < width; ++c)
      t.features.push_back((cls ? 0.75 : 0.25) + rng.uniform(-0.15, 0.15));
    t.labels.push_back(cls);
    t.n_rows += 1;
  }
  return t;
}

ModelConfig overfit_config(std::size_t width) {
  ModelConfig c;
  c.arch = Arch::cnn_lstm;
  c.input_length = width;
  c.conv_blocks = {{4, 3, tc::Padding::same},
                   {6, 3, tc::Padding::same},
                   {6, 3, tc::Padding::same}};
  c.pool_width = 2;
  c.dropout_rate = 0.0;
  c.lstm_hidden = 8;
  c.head = HeadKind::svm_margin;
  c.n_classes = 2;
  c.l2_head = 0.0;
  return validate(c);
}

bool params_equal(const NetworkParams& a, const NetworkParams& b) {
  auto na = a.named(), nb = b.named();
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i)
    if (na[i].second.values() != nb[i].second.values()) return false;
  return true;
}

}  // namespace

TEST_CASE("tiny cnn-lstm-svm overfits a separable toy", "[trainer]") {
  FlowTable data = blob_data(100, 12, 3);
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 5);
  TrainConfig tc;
  tc.batch_size = 20;
  tc.epochs = 200;
  tc.learning_rate = 3e-3;
  tc.seed = 5;
  tc.early_stop_patience = 200;  // run to convergence on the toy
  TrainHistory history = train(params, config, data, data, tc);
  double acc = accuracy_of(data.labels, predict_table(params, config, data));
  CHECK(acc == 1.0);
  CHECK(history.epochs.size() <= 200);
}

TEST_CASE("training is bitwise deterministic per seed", "[trainer]") {
  FlowTable data = blob_data(60, 12, 11);
  ModelConfig config = overfit_config(12);
  config.dropout_rate = 0.25;  // exercise the seeded mask path
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 4;
  tc.seed = 42;
  tc.early_stop_patience = 10;

  NetworkParams p1 = build(config, 9);
  NetworkParams p2 = build(config, 9);
  train(p1, config, data, data, tc);
  train(p2, config, data, data, tc);
  CHECK(params_equal(p1, p2));

  NetworkParams p3 = build(config, 9);
  TrainConfig other = tc;
  other.seed = 43;
  train(p3, config, data, data, other);
  CHECK_FALSE(params_equal(p1, p3));
}

TEST_CASE("zero learning rate leaves parameters unchanged", "[trainer]") {
  FlowTable data = blob_data(40, 12, 2);
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 1);
  NetworkParams before = params.clone();
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 3;
  tc.learning_rate = 0.0;
  tc.early_stop_patience = 100;
  train(params, config, data, data, tc);
  CHECK(params_equal(params, before));
}

TEST_CASE("full-batch sgd step equals lr times the mean-loss gradient",
          "[trainer]") {
  FlowTable data = blob_data(4, 12, 7);
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 3);
  NetworkParams start = params.clone();

  // Manual single-step computation on the same 4-sample batch.
  start.set_requires_grad(true);
  tc::Tape tape;
  std::vector<double> x(data.features);
  tc::Tensor batch = tc::Tensor::from_data({4, 12}, std::move(x));
  tc::Tensor scores = forward(tape, start, config, batch, true, 0);
  tc::Tensor loss =
      margin_loss(tape, scores, data.labels, config.l2_head, start.head_weight);
  start.zero_grad();
  tape.backward(loss);

  const double lr = 0.01;
  TrainConfig tc_cfg;
  tc_cfg.batch_size = 4;  // full batch
  tc_cfg.epochs = 1;
  tc_cfg.learning_rate = lr;
  tc_cfg.optimizer = Optimizer::sgd_momentum;
  tc_cfg.momentum = 0.0;
  tc_cfg.shuffle = false;
  tc_cfg.early_stop_patience = 10;
  train(params, config, data, data, tc_cfg);

  auto trained = params.named();
  auto manual = start.named();
  for (std::size_t i = 0; i < trained.size(); ++i) {
    const tc::Tensor& t = trained[i].second;
    const tc::Tensor& m = manual[i].second;
    for (std::size_t j = 0; j < t.size(); ++j) {
      double expect = m.values()[j] - lr * m.grad()[j];
      CHECK(t.values()[j] == Catch::Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("early stopping returns the best-validation params", "[trainer]") {
  FlowTable data = blob_data(80, 12, 13);
  auto [train_part, val_part] =
      stratified_split(data, {.test_fraction = 0.25, .seed = 1});
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 21);
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 40;
  tc.learning_rate = 3e-3;
  tc.early_stop_patience = 3;
  TrainHistory history = train(params, config, train_part, val_part, tc);
  REQUIRE(!history.epochs.empty());
  CHECK(history.epochs.size() <= 40);
  double returned_acc =
      accuracy_of(val_part.labels, predict_table(params, config, val_part));
  CHECK(returned_acc == Catch::Approx(history.best_val_accuracy));
  for (const EpochStats& e : history.epochs)
    CHECK(e.val_accuracy <= history.best_val_accuracy + 1e-12);
}

TEST_CASE("history length equals epochs when early stop never fires", "[trainer]") {
  FlowTable data = blob_data(30, 12, 17);
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 2);
  TrainConfig tc;
  tc.batch_size = 10;
  tc.epochs = 6;
  tc.early_stop_patience = 100;
  TrainHistory history = train(params, config, data, data, tc);
  CHECK(history.epochs.size() == 6);
  for (std::size_t i = 0; i < history.epochs.size(); ++i)
    CHECK(history.epochs[i].epoch == i + 1);
}

TEST_CASE("exploding training aborts with NonFiniteLoss", "[trainer]") {
  FlowTable data = blob_data(40, 12, 19);
  for (double& v : data.features) v *= 1e3;  // large inputs, huge lr
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 4);
  TrainConfig tc;
  tc.batch_size = 10;
  tc.epochs = 50;
  tc.learning_rate = 1e12;
  tc.optimizer = Optimizer::sgd_momentum;
  tc.early_stop_patience = 100;
  CHECK_THROWS_MATCHES(train(params, config, data, data, tc), Error,
                       named("NonFiniteLoss"));
}

TEST_CASE("empty data is rejected", "[trainer]") {
  FlowTable data = blob_data(10, 12, 1);
  FlowTable empty;
  empty.n_cols = 12;
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 1);
  TrainConfig tc;
  CHECK_THROWS_MATCHES(train(params, config, empty, data, tc), Error,
                       named("EmptyData"));
}

TEST_CASE("history csv export", "[trainer]") {
  TrainHistory h;
  h.epochs = {{1, 0.5, 0.7}, {2, 0.25, 0.9}};
  std::ostringstream out;
  write_history_csv(h, out);
  CHECK(out.str() == "epoch,train_loss,val_accuracy\n1,0.5,0.7\n2,0.25,0.9\n");
}

TEST_CASE("inverse frequency weights", "[trainer]") {
  std::vector<int32_t> labels = {0, 0, 0, 1};
  std::vector<double> w = inverse_frequency_weights(labels, 2);
  // 4 samples, 2 present classes: w0 = 4/(2*3), w1 = 4/(2*1)
  CHECK(w[0] == Catch::Approx(2.0 / 3.0));
  CHECK(w[1] == Catch::Approx(2.0));
}

// ---------------------------------------------------------------------------
// Checkpoint and artifact round-trips

namespace {

Checkpoint tiny_checkpoint() {
  FlowTable data = blob_data(30, 12, 23);
  ModelConfig config = overfit_config(12);
  NetworkParams params = build(config, 6);
  TrainConfig tc;
  tc.batch_size = 10;
  tc.epochs = 2;
  tc.early_stop_patience = 5;
  TrainHistory history = train(params, config, data, data, tc);

  Checkpoint c;
  c.kind = "proposed";
  c.config = config;
  c.params = params;
  c.minmax = {{0.0}, {1.0}};
  c.pca.mean = {0.1, 0.2};
  c.pca.components = {1.0, 0.0, 0.0, 1.0};
  c.pca.explained_variance_ratio = {0.7, 0.3};
  c.pca.k = 2;
  c.pca.d = 2;
  c.labels.names = {"BENIGN", "DDoS"};
  c.labels.benign_id = 0;
  c.input_feature_names = {"a", "b"};
  c.train_config = tc;
  c.history = history;
  c.run_config_echo = {{"train.epochs", "2"}, {"train.seed", "0"}};
  return c;
}

}  // namespace

TEST_CASE("checkpoint save -> load -> save is byte-identical", "[trainer]") {
  Checkpoint c = tiny_checkpoint();
  std::string bytes1 = checkpoint_to_bytes(c);
  Checkpoint loaded = checkpoint_from_reader(SectionReader::from_bytes(bytes1));
  std::string bytes2 = checkpoint_to_bytes(loaded);
  CHECK(bytes1 == bytes2);

  CHECK(loaded.kind == "proposed");
  CHECK(params_equal(loaded.params, c.params));
  CHECK(loaded.labels.names == c.labels.names);
  CHECK(loaded.history.epochs.size() == c.history.epochs.size());
  CHECK(loaded.run_config_echo == c.run_config_echo);
}

TEST_CASE("corrupt checkpoints fail cleanly", "[trainer]") {
  std::string bytes = checkpoint_to_bytes(tiny_checkpoint());

  SECTION("flipped payload byte -> ChecksumMismatch") {
    std::string bad = bytes;
    bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x40);
    CHECK_THROWS_MATCHES(SectionReader::from_bytes(bad), Error,
                         named("ChecksumMismatch"));
  }

  SECTION("truncated file -> Truncated") {
    std::string bad = bytes.substr(0, 10);
    CHECK_THROWS_MATCHES(SectionReader::from_bytes(bad), Error,
                         named("Truncated"));
  }

  SECTION("future version -> UnknownVersion") {
    // Rebuild a structurally valid file with a bumped version and valid CRC.
    std::string bad = bytes.substr(0, bytes.size() - 4);
    bad[4] = 9;  // version lives right after the 4 magic bytes
    std::string withcrc = bad;
    uint32_t crc = ser_detail::crc_of(bad);
    for (int i = 0; i < 4; ++i)
      withcrc.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));
    CHECK_THROWS_MATCHES(SectionReader::from_bytes(withcrc), Error,
                         named("UnknownVersion"));
  }
}

TEST_CASE("cnn-only checkpoint has no lstm sections and still predicts",
          "[trainer]") {
  ModelConfig config = cnn_only_config(3, 12);
  config.conv_blocks = {{3, 3, tc::Padding::same},
                        {4, 3, tc::Padding::same},
                        {4, 3, tc::Padding::same}};
  config = validate(config);
  NetworkParams params = build(config, 7);

  Checkpoint c;
  c.kind = "cnn";
  c.config = config;
  c.params = params;
  c.minmax = {{0.0}, {1.0}};
  c.pca = {{0.0}, {1.0}, {1.0}, 1, 1};
  c.labels.names = {"a", "b", "c"};
  c.input_feature_names = {"f"};

  std::string bytes = checkpoint_to_bytes(c);
  CHECK(bytes.find("param/lstm.w_input") == std::string::npos);
  Checkpoint loaded = checkpoint_from_reader(SectionReader::from_bytes(bytes));
  CHECK_FALSE(loaded.params.lstm.w_input.defined());

  Rng rng(1);
  tc::Tensor x = testutil::random_tensor({5, 12}, rng, 0, 1);
  CHECK(predict(loaded.params, loaded.config, x).size() == 5);
}

TEST_CASE("knn, rf and rbf-head checkpoints round-trip", "[trainer]") {
  Rng rng(29);
  std::vector<double> xs;
  std::vector<int32_t> ys;
  for (int i = 0; i < 20; ++i) {
    xs.push_back(rng.uniform(0, 1));
    xs.push_back(rng.uniform(0, 1));
    ys.push_back(i % 2);
  }
  FlowTable data;
  data.n_cols = 2;
  data.n_rows = 20;
  data.features = xs;
  data.labels = ys;
  data.feature_names = {"x", "y"};
  data.label_names = {"a", "b"};

  Checkpoint base;
  base.minmax = {{0.0, 0.0}, {1.0, 1.0}};
  base.pca = {{0.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, {0.6, 0.4}, 2, 2};
  base.labels.names = {"a", "b"};
  base.input_feature_names = {"x", "y"};

  SECTION("knn") {
    Checkpoint c = base;
    c.kind = "knn";
    c.knn = knn_fit(data, 3);
    std::string bytes = checkpoint_to_bytes(c);
    Checkpoint loaded = checkpoint_from_reader(SectionReader::from_bytes(bytes));
    CHECK(loaded.knn.k == 3);
    CHECK(loaded.knn.train == c.knn.train);
    CHECK(knn_predict(loaded.knn, data) == knn_predict(c.knn, data));
    CHECK(checkpoint_to_bytes(loaded) == bytes);
  }

  SECTION("rf") {
    Checkpoint c = base;
    c.kind = "rf";
    c.forest = forest_fit(data, {.n_trees = 4, .max_depth = 5, .seed = 2});
    std::string bytes = checkpoint_to_bytes(c);
    Checkpoint loaded = checkpoint_from_reader(SectionReader::from_bytes(bytes));
    CHECK(forest_predict(loaded.forest, data) == forest_predict(c.forest, data));
    CHECK(checkpoint_to_bytes(loaded) == bytes);
  }

  SECTION("rbf-head") {
    Checkpoint c = base;
    c.kind = "rbf-head";
    ModelConfig config = overfit_config(12);
    c.config = config;
    c.params = build(config, 8);
    c.svm = rbf_svm_fit(xs, ys, 2, 5.0, 1.0, 1e-4);
    std::string bytes = checkpoint_to_bytes(c);
    Checkpoint loaded = checkpoint_from_reader(SectionReader::from_bytes(bytes));
    CHECK(rbf_svm_predict(loaded.svm, xs, 2) == rbf_svm_predict(c.svm, xs, 2));
    CHECK(checkpoint_to_bytes(loaded) == bytes);
  }
}

TEST_CASE("prep artifact round-trips and dumps text", "[trainer]") {
  Rng rng(31);
  PrepArtifact a;
  a.labels.names = {"BENIGN", "PortScan"};
  a.labels.benign_id = 0;
  a.minmax.min = {0, 0, 0};
  a.minmax.max = {1, 2, 3};
  a.pca.mean = {0.5, 0.5, 0.5};
  a.pca.components = {1, 0, 0, 0, 1, 0};
  a.pca.explained_variance_ratio = {0.8, 0.15};
  a.pca.k = 2;
  a.pca.d = 3;
  a.clean_report.dropped_columns = {"Destination Port"};
  a.clean_report.dropped_rows = 4;
  a.clean_report.nonfinite_cells = 6;
  a.split = {0.2, 99, true};
  a.input_feature_names = {"f1", "f2", "f3"};
  a.dropped_columns = {"Destination Port"};
  for (FlowTable* part : {&a.train, &a.test}) {
    part->n_cols = 2;
    part->label_names = a.labels.names;
    part->feature_names = {"PC1", "PC2"};
    for (int i = 0; i < 6; ++i) {
      part->features.push_back(rng.uniform(-1, 1));
      if (i % 2 == 0) part->labels.push_back(static_cast<int32_t>(rng.below(2)));
    }
    part->n_rows = 3;
  }

  std::string bytes1 = artifact_to_bytes(a);
  PrepArtifact loaded = artifact_from_reader(SectionReader::from_bytes(bytes1));
  CHECK(artifact_to_bytes(loaded) == bytes1);
  CHECK(loaded.train.features == a.train.features);
  CHECK(loaded.test.labels == a.test.labels);
  CHECK(loaded.labels.names == a.labels.names);
  CHECK(loaded.clean_report.dropped_rows == 4);
  CHECK(loaded.split.seed == 99);

  std::ostringstream text;
  dump_preprocessing_text(loaded, text);
  CHECK(text.str().find("3 -> 2 components") != std::string::npos);
  CHECK(text.str().find("Destination Port") != std::string::npos);
}
