#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "nids/baselines.hpp"

using namespace nids;

namespace {

FlowTable make_table(std::size_t n_cols, const std::vector<double>& data,
                     const std::vector<int32_t>& labels,
                     std::size_t n_classes = 0) {
  FlowTable t;
  t.n_cols = n_cols;
  t.n_rows = labels.size();
  t.features = data;
  t.labels = labels;
  std::size_t classes = n_classes;
  if (classes == 0)
    for (int32_t l : labels)
      classes = std::max<std::size_t>(classes, static_cast<std::size_t>(l) + 1);
  for (std::size_t c = 0; c < classes; ++c)
    t.label_names.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < n_cols; ++c)
    t.feature_names.push_back("f" + std::to_string(c));
  return t;
}

// Exhaustive KNN oracle: full stable ordering by (distance, index), majority
// vote with lowest-label tie break. Shares no code with knn_predict.
int32_t knn_oracle_one(const std::vector<double>& train,
                       const std::vector<int32_t>& labels, std::size_t d,
                       const double* query, std::size_t k) {
  std::size_t n = labels.size();
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t r = 0; r < n; ++r) {
    double dist = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double diff = train[r * d + c] - query[c];
      dist += diff * diff;
    }
    order.emplace_back(std::sqrt(dist), r);
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first < b.first;
              return a.second < b.second;
            });
  std::vector<int> votes(64, 0);
  for (std::size_t i = 0; i < k; ++i) votes[labels[order[i].second]]++;
  int32_t best = 0;
  for (int32_t l = 1; l < 64; ++l)
    if (votes[l] > votes[best]) best = l;
  return best;
}

auto named(const std::string& name) {
  return Catch::Matchers::Predicate<Error>(
      [name](const Error& e) { return e.name() == name; });
}

}  // namespace

TEST_CASE("knn single stored point and exact-hit behaviour", "[baselines]") {
  FlowTable t = make_table(2, {1.0, 2.0}, {3}, 4);
  KnnModel m = knn_fit(t, 1);
  CHECK(knn_predict(m, {5.0, 5.0}, 2) == std::vector<int32_t>{3});

  FlowTable t2 = make_table(1, {0.0, 1.0, 2.0}, {0, 1, 2});
  KnnModel m2 = knn_fit(t2, 1);
  // Query equal to a stored point: that point is the nearest (distance 0).
  CHECK(knn_predict(m2, {1.0}, 1) == std::vector<int32_t>{1});
}

TEST_CASE("knn matches the brute-force oracle", "[baselines]") {
  Rng rng(314);
  for (std::size_t k : {1u, 3u, 5u}) {
    std::size_t n = 200, d = 4, nq = 50;
    std::vector<double> train;
    std::vector<int32_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) train.push_back(rng.uniform(-1, 1));
      labels.push_back(static_cast<int32_t>(rng.below(4)));
    }
    FlowTable t = make_table(d, train, labels);
    KnnModel m = knn_fit(t, k);
    std::vector<double> queries;
    for (std::size_t i = 0; i < nq * d; ++i) queries.push_back(rng.uniform(-1, 1));
    std::vector<int32_t> got = knn_predict(m, queries, d);
    for (std::size_t q = 0; q < nq; ++q)
      CHECK(got[q] == knn_oracle_one(train, labels, d, queries.data() + q * d, k));
  }
}

TEST_CASE("knn vote ties resolve to the lower label id", "[baselines]") {
  // Two classes at equal distance from the origin query, k=2.
  FlowTable t = make_table(1, {-1.0, 1.0}, {1, 0});
  KnnModel m = knn_fit(t, 2);
  CHECK(knn_predict(m, {0.0}, 1) == std::vector<int32_t>{0});
}

TEST_CASE("knn dimension mismatch", "[baselines]") {
  FlowTable t = make_table(2, {1, 2}, {0});
  KnnModel m = knn_fit(t, 1);
  CHECK_THROWS_MATCHES(knn_predict(m, {1.0, 2.0, 3.0}, 3), Error,
                       named("DimensionMismatch"));
}

TEST_CASE("forest on a single-label corpus predicts that label", "[baselines]") {
  Rng rng(1);
  std::vector<double> data;
  for (int i = 0; i < 30; ++i) data.push_back(rng.uniform(0, 1));
  FlowTable t = make_table(3, data, std::vector<int32_t>(10, 2), 3);
  ForestModel m = forest_fit(t, {.n_trees = 5, .max_depth = 4, .seed = 9});
  auto pred = forest_predict(m, t);
  for (int32_t p : pred) CHECK(p == 2);
}

TEST_CASE("single depth-1 tree solves 1-D threshold data", "[baselines]") {
  // Separable at x = 0.5.
  std::vector<double> xs = {0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9};
  std::vector<int32_t> ys = {0, 0, 0, 0, 1, 1, 1, 1};
  FlowTable t = make_table(1, xs, ys);
  ForestModel m = forest_fit(
      t, {.n_trees = 1, .max_depth = 1, .seed = 4, .bootstrap = false});
  CHECK(forest_predict(m, t) == ys);
  // The single split should sit at the midpoint of 0.4 and 0.6.
  REQUIRE(m.trees.size() == 1);
  REQUIRE(m.trees[0].nodes[0].feature == 0);
  CHECK(m.trees[0].nodes[0].threshold == Catch::Approx(0.5));
}

TEST_CASE("forest is deterministic per seed", "[baselines]") {
  Rng rng(77);
  std::vector<double> data;
  std::vector<int32_t> labels;
  for (int i = 0; i < 120; ++i) {
    double cls = static_cast<double>(i % 3);
    data.push_back(cls + rng.uniform(-0.4, 0.4));
    data.push_back(rng.uniform(0, 1));
    labels.push_back(i % 3);
  }
  FlowTable t = make_table(2, data, labels);
  ForestModel a = forest_fit(t, {.n_trees = 7, .max_depth = 6, .seed = 123});
  ForestModel b = forest_fit(t, {.n_trees = 7, .max_depth = 6, .seed = 123});
  CHECK(forest_predict(a, t) == forest_predict(b, t));
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t i = 0; i < a.trees.size(); ++i) {
    REQUIRE(a.trees[i].nodes.size() == b.trees[i].nodes.size());
    for (std::size_t j = 0; j < a.trees[i].nodes.size(); ++j) {
      CHECK(a.trees[i].nodes[j].feature == b.trees[i].nodes[j].feature);
      CHECK(a.trees[i].nodes[j].threshold == b.trees[i].nodes[j].threshold);
    }
  }
}

TEST_CASE("unbounded bootstrap-free tree memorizes distinct rows", "[baselines]") {
  Rng rng(202);
  std::size_t n = 60, d = 3;
  std::vector<double> data;
  std::vector<int32_t> labels;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) data.push_back(rng.uniform(-5, 5));
    labels.push_back(static_cast<int32_t>(rng.below(4)));
  }
  FlowTable t = make_table(d, data, labels);
  ForestModel m = forest_fit(t, {.n_trees = 1,
                                 .max_depth = std::numeric_limits<std::size_t>::max(),
                                 .seed = 5,
                                 .bootstrap = false,
                                 .features_per_split = d});
  CHECK(forest_predict(m, t) == labels);
}

TEST_CASE("forest rejects empty tables", "[baselines]") {
  FlowTable t = make_table(2, {}, {});
  CHECK_THROWS_MATCHES(forest_fit(t, {}), Error, named("EmptyTable"));
}

TEST_CASE("rbf svm separates two opposite points", "[baselines]") {
  std::vector<double> x = {0.0, 0.0, 1.0, 1.0};
  std::vector<int32_t> y = {0, 1};
  RbfSvmModel m = rbf_svm_fit(x, y, 2, 10.0, 1.0, 1e-4);
  REQUIRE(m.machines.size() == 2);
  // Both points become support vectors of each machine.
  CHECK(m.machines[0].alpha.size() == 2);
  CHECK(m.machines[1].alpha.size() == 2);
  CHECK(rbf_svm_predict(m, x, 2) == y);
  // Midpoint sits on the decision boundary between the two machines.
  double d0 = svm_decision(m, m.machines[0], std::vector<double>{0.5, 0.5}.data());
  double d1 = svm_decision(m, m.machines[1], std::vector<double>{0.5, 0.5}.data());
  CHECK(d0 == Catch::Approx(d1).margin(1e-9));
}

TEST_CASE("rbf svm solves XOR with clean KKT conditions", "[baselines]") {
  std::vector<double> x = {0, 0, 1, 1, 0, 1, 1, 0};
  std::vector<int32_t> y = {0, 0, 1, 1};
  RbfSvmModel m = rbf_svm_fit(x, y, 2, 10.0, 1.0, 1e-8);
  CHECK(rbf_svm_predict(m, x, 2) == y);
  for (std::size_t machine = 0; machine < m.machines.size(); ++machine) {
    KktReport report = rbf_svm_kkt(m, machine, x, y);
    CHECK(report.max_violation <= 1e-6);
    CHECK(report.equality_residual <= 1e-6);
  }
}

TEST_CASE("rbf svm dual constraints hold on random data", "[baselines]") {
  Rng rng(515);
  std::size_t n = 40, d = 3;
  std::vector<double> x;
  std::vector<int32_t> y;
  for (std::size_t i = 0; i < n; ++i) {
    int32_t cls = static_cast<int32_t>(rng.below(3));
    for (std::size_t c = 0; c < d; ++c)
      x.push_back(static_cast<double>(cls) + rng.normal(0.0, 0.6));
    y.push_back(cls);
  }
  double c_penalty = 5.0;
  RbfSvmModel m = rbf_svm_fit(x, y, d, c_penalty, 0.5, 1e-5);
  for (const BinarySvm& machine : m.machines) {
    double eq = 0.0;
    for (std::size_t i = 0; i < machine.alpha.size(); ++i) {
      CHECK(machine.alpha[i] >= 0.0);
      CHECK(machine.alpha[i] <= c_penalty + 1e-9);
      eq += machine.alpha[i] * machine.sign[i];
    }
    CHECK(std::abs(eq) <= 1e-6);
  }
}

TEST_CASE("svm predicts its own support vectors on separable data", "[baselines]") {
  // Two well-separated blobs.
  Rng rng(8);
  std::vector<double> x;
  std::vector<int32_t> y;
  for (int i = 0; i < 12; ++i) {
    double base = i < 6 ? 0.0 : 4.0;
    x.push_back(base + rng.uniform(-0.3, 0.3));
    x.push_back(base + rng.uniform(-0.3, 0.3));
    y.push_back(i < 6 ? 0 : 1);
  }
  RbfSvmModel m = rbf_svm_fit(x, y, 2, 10.0, 0.7, 1e-5);
  CHECK(rbf_svm_predict(m, x, 2) == y);
}

TEST_CASE("svm decision decays monotonically away from the support set",
          "[baselines]") {
  std::vector<double> x = {0.0, 0.0, 3.0, 3.0};
  std::vector<int32_t> y = {1, 0};
  RbfSvmModel m = rbf_svm_fit(x, y, 2, 10.0, 1.0, 1e-5);
  // Walk along the diagonal away from the class-1 point: its machine's
  // decision value must not increase.
  double prev = std::numeric_limits<double>::infinity();
  for (double step = 0.0; step <= 1.5; step += 0.25) {
    std::vector<double> probe = {-step, -step};
    double v = svm_decision(m, m.machines[1], probe.data());
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_CASE("svm error paths", "[baselines]") {
  std::vector<double> x = {0, 0, 1, 1};
  CHECK_THROWS_MATCHES(rbf_svm_fit(x, {0, 0}, 2, 1.0, 1.0), Error,
                       named("SingleClass"));
  CHECK_THROWS_MATCHES(rbf_svm_fit(x, {0, 1}, 2, -1.0, 1.0), Error,
                       named("InvalidConfig"));
  RbfSvmModel m = rbf_svm_fit(x, {0, 1}, 2, 1.0, 1.0);
  CHECK_THROWS_MATCHES(rbf_svm_predict(m, {1.0}, 1), Error,
                       named("DimensionMismatch"));
}

TEST_CASE("dnn5 config builds a 5-hidden-layer network", "[baselines]") {
  ModelConfig c = dnn5_config(4, 30);
  CHECK(c.mlp_widths == std::vector<std::size_t>{256, 128, 64, 32, 16});
  NetworkParams p = build(c, 3);
  CHECK(p.dense.size() == 5);
  CHECK(p.conv.empty());
  CHECK_FALSE(p.lstm.w_input.defined());
  CHECK(p.head_weight.shape() == tc::Shape{4, 16});

  Rng rng(3);
  tc::Tensor x = testutil::random_tensor({3, 30}, rng, 0, 1);
  tc::Tape silent(false);
  CHECK(forward(silent, p, c, x, false).shape() == tc::Shape{3, 4});
}

TEST_CASE("dnn5 gradient check", "[baselines]") {
  ModelConfig c = dnn5_config(3, 8);
  c.mlp_widths = {10, 8, 6, 5, 4};  // same depth, desk-scale widths
  c = validate(c);
  // Seed keeps every relu pre-activation clear of its kink during probing.
  NetworkParams params = build(c, 22);
  params.set_requires_grad(false);
  Rng rng(23);
  tc::Tensor x = testutil::random_tensor({4, 8}, rng, 0, 1);
  std::vector<int32_t> labels = {0, 1, 2, 0};
  auto names = params.named();
  double worst = 0.0;
  for (std::size_t pi = 0; pi < names.size(); ++pi) {
    auto f = [&](tc::Tape& tape, const tc::Tensor& v) {
      NetworkParams rebuilt = params.clone();
      rebuilt.set_requires_grad(false);
      *rebuilt.slots()[pi] = v;
      return softmax_xent_loss(tape, forward(tape, rebuilt, c, x, true, 3),
                               labels);
    };
    worst = std::max(worst, tc::grad_check(f, names[pi].second, 1e-5));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("cnn-only config has no recurrent parameters", "[baselines]") {
  ModelConfig c = cnn_only_config(5, 30);
  CHECK(c.arch == Arch::cnn_only);
  CHECK(c.head == HeadKind::softmax_xent);
  NetworkParams p = build(c, 2);
  CHECK_FALSE(p.lstm.w_input.defined());
  CHECK(p.conv.size() == 3);
  // Head consumes the channel average: n_classes x last filter count.
  CHECK(p.head_weight.shape() == tc::Shape{5, 64});
}

TEST_CASE("cnn-lstm-softmax differs from proposed only in the head", "[baselines]") {
  ModelConfig soft = cnn_lstm_softmax_config(4, 30);
  ModelConfig prop = proposed_config(4, 30);
  CHECK(soft.arch == prop.arch);
  CHECK(soft.conv_blocks.size() == prop.conv_blocks.size());
  CHECK(soft.lstm_hidden == prop.lstm_hidden);
  CHECK(soft.lstm_steps == prop.lstm_steps);
  CHECK(soft.head == HeadKind::softmax_xent);
  CHECK(prop.head == HeadKind::svm_margin);
  CHECK(prop.l2_head > 0.0);
}

TEST_CASE("both conv baselines pass a gradient check", "[baselines]") {
  for (Arch arch : {Arch::cnn_only, Arch::cnn_lstm}) {
    ModelConfig c;
    c.arch = arch;
    c.input_length = 12;
    c.conv_blocks = {{3, 3, tc::Padding::same},
                     {4, 3, tc::Padding::same},
                     {4, 3, tc::Padding::same}};
    c.pool_width = 2;
    c.dropout_rate = 0.0;
    c.lstm_hidden = 5;
    c.head = HeadKind::softmax_xent;
    c.n_classes = 3;
    c.l2_head = 0.0;
    c = validate(c);
    NetworkParams params = build(c, 13);
    params.set_requires_grad(false);
    Rng rng(14);
    tc::Tensor x = testutil::random_tensor({4, 12}, rng, 0, 1);
    std::vector<int32_t> labels = {2, 1, 0, 1};
    auto names = params.named();
    double worst = 0.0;
    for (std::size_t pi = 0; pi < names.size(); ++pi) {
      auto f = [&](tc::Tape& tape, const tc::Tensor& v) {
        NetworkParams rebuilt = params.clone();
        rebuilt.set_requires_grad(false);
        *rebuilt.slots()[pi] = v;
        return softmax_xent_loss(tape, forward(tape, rebuilt, c, x, true, 5),
                                 labels);
      };
      worst = std::max(worst, tc::grad_check(f, names[pi].second, 1e-5));
    }
    CHECK(worst <= 1e-4);
  }
}
