#pragma once

// CICIDS2017-style flow CSV ingestion: header-bearing comma-separated files,
// all columns numeric except one label column. Non-finite sentinel cells
// ("NaN", "Infinity", "-Infinity") are kept as non-finite doubles here; the
// cleaning pass owns their removal so it can report counts.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nids/error.hpp"
#include "nids/rng.hpp"

namespace nids {

// Columnar numeric feature matrix plus per-row labels. Labels are ids into
// the table's own dictionary (first-appearance order); align_labels() maps
// them onto a shared LabelSpace. Immutable once built; share freely.
struct FlowTable {
  std::vector<std::string> feature_names;
  std::vector<double> features;  // row-major, n_rows x n_cols
  std::vector<int32_t> labels;
  std::vector<std::string> label_names;  // local dictionary
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;

  double at(std::size_t row, std::size_t col) const {
    return features[row * n_cols + col];
  }
  const double* row(std::size_t r) const { return features.data() + r * n_cols; }
  const std::string& label_of(std::size_t r) const {
    return label_names[static_cast<std::size_t>(labels[r])];
  }
};

struct LabelSpace {
  std::vector<std::string> names;  // index = label id
  std::optional<std::size_t> benign_id;

  std::optional<std::size_t> id_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }
  std::size_t n_classes() const { return names.size(); }
};

struct SplitSpec {
  double test_fraction = 0.2;  // strictly inside (0, 1)
  uint64_t seed = 0;
  bool stratified = true;
};

namespace csv_detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Trim plus collapse of internal whitespace runs. CICIDS2017 headers and
// labels carry inconsistent spacing; matching happens on this form.
inline std::string canonical(std::string_view s) {
  std::string out;
  bool in_ws = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = !out.empty();
    } else {
      if (in_ws) out.push_back(' ');
      in_ws = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return s;
}

inline void split_line(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline bool parse_cell(std::string_view raw, double& out) {
  std::string token = trim(raw);
  if (token.empty()) return false;
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (*begin == '+') ++begin;  // from_chars rejects an explicit plus
  if (begin == end) return false;
  auto res = std::from_chars(begin, end, out);  // accepts inf/infinity/nan
  return res.ec == std::errc() && res.ptr == end;
}

inline std::string format_cell(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip
  return std::string(buf, res.ptr);
}

}  // namespace csv_detail

// Parses one header-bearing CSV. Sentinel tokens become non-finite doubles
// and rows are kept verbatim: no row is dropped or reordered here. Duplicate
// header names get a numeric suffix (the raw CICIDS2017 files repeat
// "Fwd Header Length").
inline FlowTable parse_csv(std::istream& in,
                           const std::string& expected_label_column = "Label") {
  FlowTable table;
  std::string line;
  if (!std::getline(in, line))
    fail("MissingLabelColumn", "empty input: no header line");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> cells;
  csv_detail::split_line(line, cells);
  std::vector<std::string> header;
  header.reserve(cells.size());
  std::unordered_map<std::string, int> seen;
  for (const std::string& raw : cells) {
    std::string name = csv_detail::canonical(raw);
    int n = seen[name]++;
    if (n > 0) name += "." + std::to_string(n);
    header.push_back(std::move(name));
  }

  std::size_t label_col = header.size();
  std::string want = csv_detail::canonical(expected_label_column);
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == want) {
      label_col = i;
      break;
    }
  if (label_col == header.size())
    fail("MissingLabelColumn", "no column named '" + want + "'");

  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != label_col) table.feature_names.push_back(header[i]);
  table.n_cols = table.feature_names.size();

  std::unordered_map<std::string, int32_t> label_ids;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    csv_detail::split_line(line, cells);
    if (cells.size() != header.size())
      fail("RaggedRow", "row " + std::to_string(row_index) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
    std::size_t out_col = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_col) continue;
      double v;
      if (!csv_detail::parse_cell(cells[c], v))
        fail("UnparsableCell", "row " + std::to_string(row_index) + ", column '" +
                                   header[c] + "': token '" +
                                   csv_detail::trim(cells[c]) + "'");
      table.features.push_back(v);
      ++out_col;
    }
    (void)out_col;
    std::string label = csv_detail::canonical(cells[label_col]);
    auto it = label_ids.find(label);
    if (it == label_ids.end()) {
      it = label_ids.emplace(label, static_cast<int32_t>(table.label_names.size()))
               .first;
      table.label_names.push_back(label);
    }
    table.labels.push_back(it->second);
    ++row_index;
  }
  table.n_rows = row_index;
  return table;
}

inline FlowTable parse_csv_file(const std::filesystem::path& path,
                                const std::string& label_column = "Label") {
  std::ifstream in(path);
  if (!in) fail("FileNotFound", "cannot open " + path.string());
  return parse_csv(in, label_column);
}

// Re-export in the same layout: header row, features, trailing label column.
// Floats print in shortest round-trip form so parse(write(t)) == t bitwise.
inline void write_csv(const FlowTable& table, std::ostream& out,
                      const std::string& label_column = "Label") {
  for (const std::string& name : table.feature_names) out << name << ',';
  out << label_column << '\n';
  for (std::size_t r = 0; r < table.n_rows; ++r) {
    for (std::size_t c = 0; c < table.n_cols; ++c)
      out << csv_detail::format_cell(table.at(r, c)) << ',';
    out << table.label_of(r) << '\n';
  }
}

// Canonical label space: BENIGN (matched case-insensitively) first, attack
// names lexicographic after it. Deterministic regardless of input order.
inline LabelSpace build_label_space(const std::vector<const FlowTable*>& tables) {
  std::vector<std::string> names;
  for (const FlowTable* t : tables)
    for (const std::string& n : t->label_names) names.push_back(n);
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  if (names.empty()) fail("NoLabels", "no labels observed in any table");

  LabelSpace space;
  for (const std::string& n : names)
    if (csv_detail::upper(n) == "BENIGN") {
      space.names.push_back(n);
      space.benign_id = 0;
      break;
    }
  for (const std::string& n : names)
    if (space.names.empty() || n != space.names.front()) space.names.push_back(n);
  return space;
}

inline LabelSpace build_label_space(const std::vector<FlowTable>& tables) {
  std::vector<const FlowTable*> ptrs;
  for (const FlowTable& t : tables) ptrs.push_back(&t);
  return build_label_space(ptrs);
}

// Rewrites a table's label ids onto a shared space.
inline FlowTable align_labels(const FlowTable& table, const LabelSpace& space) {
  FlowTable out = table;
  out.label_names = space.names;
  std::vector<int32_t> remap(table.label_names.size());
  for (std::size_t i = 0; i < table.label_names.size(); ++i) {
    auto id = space.id_of(table.label_names[i]);
    if (!id)
      fail("UnknownLabel", "label '" + table.label_names[i] +
                               "' absent from the label space");
    remap[i] = static_cast<int32_t>(*id);
  }
  for (int32_t& l : out.labels) l = remap[static_cast<std::size_t>(l)];
  return out;
}

namespace csv_detail {

inline FlowTable take_rows(const FlowTable& table,
                           const std::vector<std::size_t>& rows) {
  FlowTable out;
  out.feature_names = table.feature_names;
  out.label_names = table.label_names;
  out.n_cols = table.n_cols;
  out.n_rows = rows.size();
  out.features.reserve(rows.size() * table.n_cols);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    const double* src = table.row(r);
    out.features.insert(out.features.end(), src, src + table.n_cols);
    out.labels.push_back(table.labels[r]);
  }
  return out;
}

}  // namespace csv_detail

// Seeded train/test partition. Stratified mode draws
// clamp(round(count * fraction), 1, count - 1) test rows per class so every
// class stays represented on both sides. Row order within each side follows
// the original table.
inline std::pair<FlowTable, FlowTable> stratified_split(const FlowTable& table,
                                                        const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    fail("InvalidFraction", "test_fraction must lie strictly inside (0,1)");

  std::vector<std::size_t> test_rows, train_rows;
  Rng rng(spec.seed);
  if (spec.stratified) {
    std::size_t n_classes = table.label_names.size();
    std::vector<std::vector<std::size_t>> per_class(n_classes);
    for (std::size_t r = 0; r < table.n_rows; ++r)
      per_class[static_cast<std::size_t>(table.labels[r])].push_back(r);
    for (std::size_t c = 0; c < n_classes; ++c) {
      auto& rows = per_class[c];
      if (rows.empty()) continue;
      if (rows.size() < 2)
        fail("ClassTooSmall", "class '" + table.label_names[c] +
                                  "' has fewer than 2 rows");
      std::size_t want = static_cast<std::size_t>(
          std::llround(static_cast<double>(rows.size()) * spec.test_fraction));
      want = std::clamp<std::size_t>(want, 1, rows.size() - 1);
      shuffle(rows, rng);
      test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + want);
      train_rows.insert(train_rows.end(), rows.begin() + want, rows.end());
    }
  } else {
    std::vector<std::size_t> rows(table.n_rows);
    std::iota(rows.begin(), rows.end(), 0);
    std::size_t want = static_cast<std::size_t>(
        std::llround(static_cast<double>(rows.size()) * spec.test_fraction));
    want = std::clamp<std::size_t>(want, 1, rows.size() > 1 ? rows.size() - 1 : 1);
    shuffle(rows, rng);
    test_rows.assign(rows.begin(), rows.begin() + want);
    train_rows.assign(rows.begin() + want, rows.end());
  }
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {csv_detail::take_rows(table, train_rows),
          csv_detail::take_rows(table, test_rows)};
}

// Concatenates tables with identical feature layouts (daily CSV files).
inline FlowTable concat_tables(const std::vector<FlowTable>& tables) {
  if (tables.empty()) fail("EmptyTable", "nothing to concatenate");
  FlowTable out;
  out.feature_names = tables.front().feature_names;
  out.n_cols = tables.front().n_cols;
  std::unordered_map<std::string, int32_t> ids;
  for (const FlowTable& t : tables) {
    if (t.feature_names != out.feature_names)
      fail("HeaderMismatch", "feature columns differ between input files");
    for (std::size_t r = 0; r < t.n_rows; ++r) {
      const std::string& name = t.label_of(r);
      auto it = ids.find(name);
      if (it == ids.end()) {
        it = ids.emplace(name, static_cast<int32_t>(out.label_names.size())).first;
        out.label_names.push_back(name);
      }
      out.labels.push_back(it->second);
      const double* src = t.row(r);
      out.features.insert(out.features.end(), src, src + t.n_cols);
    }
    out.n_rows += t.n_rows;
  }
  return out;
}

// Loads every *.csv under `dir` in filename-lexicographic order.
inline FlowTable load_csv_dir(const std::filesystem::path& dir,
                              const std::string& label_column = "Label") {
  std::vector<std::filesystem::path> paths;
  if (std::filesystem::is_regular_file(dir)) {
    paths.push_back(dir);
  } else if (std::filesystem::is_directory(dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".csv") paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end(),
              [](const auto& a, const auto& b) {
                return a.filename().string() < b.filename().string();
              });
  } else {
    fail("FileNotFound", dir.string() + " is neither a file nor a directory");
  }
  if (paths.empty()) fail("FileNotFound", "no .csv files under " + dir.string());
  std::vector<FlowTable> tables;
  tables.reserve(paths.size());
  for (const auto& p : paths) tables.push_back(parse_csv_file(p, label_column));
  return concat_tables(tables);
}

}  // namespace nids
