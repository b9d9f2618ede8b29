#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "nids/flow.hpp"
#include "nids/rng.hpp"

using namespace nids;

namespace {

// 79-column CICIDS2017-style header: 78 features plus the label.
std::string wide_header() {
  std::string h = "Destination Port";
  for (int i = 1; i < 78; ++i) h += ",F" + std::to_string(i);
  h += ",Label";
  return h;
}

std::string wide_row(double fill, const std::string& label) {
  std::string r = "80";
  for (int i = 1; i < 78; ++i) r += "," + std::to_string(fill);
  r += "," + label;
  return r;
}

auto named(const std::string& name) {
  return Catch::Matchers::Predicate<Error>(
      [name](const Error& e) { return e.name() == name; });
}

}  // namespace

TEST_CASE("parse_csv on a 79-column file", "[flow]") {
  std::istringstream in(wide_header() + "\n" + wide_row(1.5, "BENIGN") + "\n" +
                        wide_row(2.5, "DDoS") + "\n");
  FlowTable t = parse_csv(in, "Label");
  CHECK(t.n_rows == 2);
  CHECK(t.n_cols == 78);
  CHECK(t.feature_names.size() == 78);
  CHECK(t.feature_names[0] == "Destination Port");
  CHECK(t.labels.size() == 2);
  CHECK(t.label_of(0) == "BENIGN");
  CHECK(t.label_of(1) == "DDoS");
}

TEST_CASE("non-finite sentinels are stored, rows retained", "[flow]") {
  std::istringstream in(
      "a,b,Label\n"
      "1,Infinity,x\n"
      "-Infinity,NaN,y\n"
      "+infinity,-nan,z\n");
  FlowTable t = parse_csv(in);
  REQUIRE(t.n_rows == 3);
  CHECK(std::isinf(t.at(0, 1)));
  CHECK(t.at(0, 1) > 0);
  CHECK(std::isinf(t.at(1, 0)));
  CHECK(t.at(1, 0) < 0);
  CHECK(std::isnan(t.at(1, 1)));
  CHECK(std::isinf(t.at(2, 0)));
  CHECK(std::isnan(t.at(2, 1)));
}

TEST_CASE("header-only file parses to an empty table", "[flow]") {
  std::istringstream in(wide_header() + "\n");
  FlowTable t = parse_csv(in);
  CHECK(t.n_rows == 0);
  CHECK(t.n_cols == 78);
}

TEST_CASE("parse errors carry stable names", "[flow]") {
  std::istringstream no_label("a,b,NotIt\n1,2,3\n");
  CHECK_THROWS_MATCHES(parse_csv(no_label), Error, named("MissingLabelColumn"));

  std::istringstream ragged("a,b,Label\n1,2,x\n1,x\n");
  CHECK_THROWS_MATCHES(parse_csv(ragged), Error, named("RaggedRow"));

  std::istringstream bad_cell("a,b,Label\n1,garbage,x\n");
  CHECK_THROWS_MATCHES(parse_csv(bad_cell), Error, named("UnparsableCell"));

  std::istringstream empty_cell("a,b,Label\n1,,x\n");
  CHECK_THROWS_MATCHES(parse_csv(empty_cell), Error, named("UnparsableCell"));
}

TEST_CASE("header whitespace is trimmed and duplicates suffixed", "[flow]") {
  std::istringstream in(" Fwd Header Length, Fwd Header Length ,  Label \n1,2,x\n");
  FlowTable t = parse_csv(in);
  CHECK(t.feature_names[0] == "Fwd Header Length");
  CHECK(t.feature_names[1] == "Fwd Header Length.1");
}

TEST_CASE("labels are canonicalized but keep their casing", "[flow]") {
  std::istringstream in("a,Label\n1,  Web  Attack   XSS \n2,Web Attack XSS\n");
  FlowTable t = parse_csv(in);
  CHECK(t.label_names.size() == 1);
  CHECK(t.label_of(0) == "Web Attack XSS");
  CHECK(t.labels[0] == t.labels[1]);
}

TEST_CASE("csv round-trip is bitwise", "[flow]") {
  Rng rng(21);
  std::ostringstream src;
  src << "c1,c2,c3,Label\n";
  for (int r = 0; r < 50; ++r) {
    for (int c = 0; c < 3; ++c) {
      double v;
      switch (rng.below(10)) {
        case 0: v = std::numeric_limits<double>::quiet_NaN(); break;
        case 1: v = std::numeric_limits<double>::infinity(); break;
        case 2: v = -std::numeric_limits<double>::infinity(); break;
        default:
          v = rng.uniform(-1.0, 1.0) *
              std::pow(10.0, static_cast<double>(rng.below(18)));
      }
      src << csv_detail::format_cell(v) << ',';
    }
    src << (rng.below(2) ? "BENIGN" : "PortScan") << '\n';
  }
  std::istringstream first(src.str());
  FlowTable a = parse_csv(first);
  std::ostringstream out;
  write_csv(a, out);
  std::istringstream second(out.str());
  FlowTable b = parse_csv(second);
  REQUIRE(a.n_rows == b.n_rows);
  REQUIRE(a.n_cols == b.n_cols);
  CHECK(a.feature_names == b.feature_names);
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.features.size(); ++i) {
    if (std::isnan(a.features[i])) {
      CHECK(std::isnan(b.features[i]));
    } else {
      CHECK(a.features[i] == b.features[i]);  // bitwise for non-NaN
    }
  }
}

TEST_CASE("build_label_space ordering rules", "[flow]") {
  FlowTable t;
  t.label_names = {"PortScan", "BENIGN", "DDoS"};
  LabelSpace space = build_label_space({&t});
  CHECK(space.names == std::vector<std::string>{"BENIGN", "DDoS", "PortScan"});
  REQUIRE(space.benign_id.has_value());
  CHECK(*space.benign_id == 0);
}

TEST_CASE("label space without benign uses the none sentinel", "[flow]") {
  FlowTable t;
  t.label_names = {"DDoS"};
  LabelSpace space = build_label_space({&t});
  CHECK(space.names == std::vector<std::string>{"DDoS"});
  CHECK_FALSE(space.benign_id.has_value());
}

TEST_CASE("label space of an empty corpus fails", "[flow]") {
  FlowTable t;
  CHECK_THROWS_MATCHES(build_label_space({&t}), Error, named("NoLabels"));
}

TEST_CASE("full corpus label scan yields 15 names", "[flow]") {
  FlowTable t;
  t.label_names = {"BENIGN", "Bot", "DDoS", "DoS GoldenEye", "DoS Hulk",
                   "DoS Slowhttptest", "DoS slowloris", "FTP-Patator",
                   "Heartbleed", "Infiltration", "PortScan", "SSH-Patator",
                   "Web Attack Brute Force", "Web Attack Sql Injection",
                   "Web Attack XSS"};
  LabelSpace space = build_label_space({&t});
  CHECK(space.names.size() == 15);  // 1 benign + 14 attacks
  CHECK(*space.benign_id == 0);
}

namespace {

FlowTable tiny_table(const std::vector<int32_t>& labels,
                     const std::vector<std::string>& names) {
  FlowTable t;
  t.feature_names = {"f"};
  t.n_cols = 1;
  t.n_rows = labels.size();
  t.label_names = names;
  t.labels = labels;
  for (std::size_t i = 0; i < labels.size(); ++i)
    t.features.push_back(static_cast<double>(i));
  return t;
}

}  // namespace

TEST_CASE("stratified_split basic counts", "[flow]") {
  FlowTable t = tiny_table(std::vector<int32_t>(10, 0), {"only"});
  auto [train, test] = stratified_split(t, {.test_fraction = 0.2, .seed = 5});
  CHECK(train.n_rows == 8);
  CHECK(test.n_rows == 2);
}

TEST_CASE("stratified_split is deterministic per seed", "[flow]") {
  std::vector<int32_t> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(i % 2);
  FlowTable t = tiny_table(labels, {"a", "b"});
  auto [tr1, te1] = stratified_split(t, {.test_fraction = 0.3, .seed = 9});
  auto [tr2, te2] = stratified_split(t, {.test_fraction = 0.3, .seed = 9});
  CHECK(tr1.features == tr2.features);
  CHECK(te1.features == te2.features);
  auto [tr3, te3] = stratified_split(t, {.test_fraction = 0.3, .seed = 10});
  CHECK(te1.features != te3.features);
}

TEST_CASE("stratified_split preserves class proportions", "[flow]") {
  std::vector<int32_t> labels(110);
  for (int i = 0; i < 100; ++i) labels[i] = 0;
  for (int i = 100; i < 110; ++i) labels[i] = 1;
  FlowTable t = tiny_table(labels, {"big", "small"});
  auto [train, test] = stratified_split(t, {.test_fraction = 0.2, .seed = 1});
  std::size_t test_big = 0, test_small = 0;
  for (int32_t l : test.labels) (l == 0 ? test_big : test_small)++;
  CHECK(test_big == 20);
  CHECK(test_small == 2);
  CHECK(train.n_rows == 88);
}

TEST_CASE("stratified_split partitions the table", "[flow]") {
  std::vector<int32_t> labels;
  for (int i = 0; i < 57; ++i) labels.push_back(i % 3);
  FlowTable t = tiny_table(labels, {"a", "b", "c"});
  auto [train, test] = stratified_split(t, {.test_fraction = 0.25, .seed = 3});
  CHECK(train.n_rows + test.n_rows == t.n_rows);
  std::multiset<double> all(t.features.begin(), t.features.end());
  std::multiset<double> got(train.features.begin(), train.features.end());
  got.insert(test.features.begin(), test.features.end());
  CHECK(all == got);  // row payloads are unique, so this checks the partition
}

TEST_CASE("stratified_split rejects singleton classes", "[flow]") {
  FlowTable t = tiny_table({0, 0, 1}, {"ok", "lonely"});
  CHECK_THROWS_MATCHES(stratified_split(t, {.test_fraction = 0.5, .seed = 0}),
                       Error, named("ClassTooSmall"));
}

TEST_CASE("align_labels remaps ids onto a shared space", "[flow]") {
  FlowTable t = tiny_table({0, 1, 0}, {"PortScan", "BENIGN"});
  LabelSpace space = build_label_space({&t});
  FlowTable aligned = align_labels(t, space);
  CHECK(aligned.label_of(0) == "PortScan");
  CHECK(aligned.label_of(1) == "BENIGN");
  CHECK(aligned.labels == std::vector<int32_t>{1, 0, 1});
}

TEST_CASE("concat_tables stitches daily files", "[flow]") {
  FlowTable a = tiny_table({0}, {"BENIGN"});
  FlowTable b = tiny_table({0, 0}, {"DDoS"});
  FlowTable all = concat_tables({a, b});
  CHECK(all.n_rows == 3);
  CHECK(all.label_of(0) == "BENIGN");
  CHECK(all.label_of(1) == "DDoS");

  FlowTable c = tiny_table({0}, {"x"});
  c.feature_names = {"different"};
  CHECK_THROWS_MATCHES(concat_tables({a, c}), Error, named("HeaderMismatch"));
}
