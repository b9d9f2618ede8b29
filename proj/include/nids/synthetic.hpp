#pragma once

// Synthetic flow-record corpus in the exact CICIDS2017 MachineLearningCVE
// CSV layout: the real 78-feature header plus a trailing Label column, real
// class names, per-class feature signatures, heavy-tailed magnitudes,
// all-zero columns, and occasional Infinity/NaN cells in the rate features
// (where the real files have them). Used by the demo CLI and the test
// corpus; everything derives from an explicit seed.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "nids/error.hpp"
#include "nids/flow.hpp"
#include "nids/rng.hpp"

namespace nids {

inline const std::vector<std::string>& cicids_feature_names() {
  static const std::vector<std::string> names = {
      "Destination Port", "Flow Duration", "Total Fwd Packets",
      "Total Backward Packets", "Total Length of Fwd Packets",
      "Total Length of Bwd Packets", "Fwd Packet Length Max",
      "Fwd Packet Length Min", "Fwd Packet Length Mean",
      "Fwd Packet Length Std", "Bwd Packet Length Max",
      "Bwd Packet Length Min", "Bwd Packet Length Mean",
      "Bwd Packet Length Std", "Flow Bytes/s", "Flow Packets/s",
      "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max", "Flow IAT Min",
      "Fwd IAT Total", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max",
      "Fwd IAT Min", "Bwd IAT Total", "Bwd IAT Mean", "Bwd IAT Std",
      "Bwd IAT Max", "Bwd IAT Min", "Fwd PSH Flags", "Bwd PSH Flags",
      "Fwd URG Flags", "Bwd URG Flags", "Fwd Header Length",
      "Bwd Header Length", "Fwd Packets/s", "Bwd Packets/s",
      "Min Packet Length", "Max Packet Length", "Packet Length Mean",
      "Packet Length Std", "Packet Length Variance", "FIN Flag Count",
      "SYN Flag Count", "RST Flag Count", "PSH Flag Count", "ACK Flag Count",
      "URG Flag Count", "CWE Flag Count", "ECE Flag Count", "Down/Up Ratio",
      "Average Packet Size", "Avg Fwd Segment Size", "Avg Bwd Segment Size",
      "Fwd Header Length.1", "Fwd Avg Bytes/Bulk", "Fwd Avg Packets/Bulk",
      "Fwd Avg Bulk Rate", "Bwd Avg Bytes/Bulk", "Bwd Avg Packets/Bulk",
      "Bwd Avg Bulk Rate", "Subflow Fwd Packets", "Subflow Fwd Bytes",
      "Subflow Bwd Packets", "Subflow Bwd Bytes", "Init_Win_bytes_forward",
      "Init_Win_bytes_backward", "act_data_pkt_fwd", "min_seg_size_forward",
      "Active Mean", "Active Std", "Active Max", "Active Min", "Idle Mean",
      "Idle Std", "Idle Max", "Idle Min"};
  return names;
}

struct SynthClass {
  std::string name;
  double weight;
  int port;
};

inline const std::vector<SynthClass>& synth_classes() {
  static const std::vector<SynthClass> classes = {
      {"BENIGN", 0.44, 443},        {"DoS Hulk", 0.14, 80},
      {"PortScan", 0.12, 22},       {"DDoS", 0.10, 80},
      {"DoS GoldenEye", 0.06, 80},  {"FTP-Patator", 0.05, 21},
      {"SSH-Patator", 0.04, 22},    {"DoS slowloris", 0.03, 80},
      {"Bot", 0.02, 8080},
  };
  return classes;
}

struct SynthOptions {
  std::size_t rows = 20000;
  uint64_t seed = 1;
  double nonfinite_fraction = 0.004;  // rows given an inf/NaN rate cell
};

namespace synth_detail {

// The "Fwd Avg *" / "Bwd Avg *" bulk columns are all zero in the real
// extracts; Flow Bytes/s and Flow Packets/s carry the inf/NaN cells.
inline bool is_zero_column(std::size_t j) { return j >= 56 && j <= 61; }
inline constexpr std::size_t kFlowBytesPerSec = 14;
inline constexpr std::size_t kFlowPacketsPerSec = 15;

}  // namespace synth_detail

// Class-conditional generator: every class shifts its own deterministic set
// of marker features by a couple of noise standard deviations, magnitudes
// vary by orders of magnitude across columns, and a small fraction of rows
// carries non-finite rate cells. The task is learnable but not trivial.
inline FlowTable synthesize_flows(const SynthOptions& options) {
  const auto& names = cicids_feature_names();
  const auto& classes = synth_classes();
  std::size_t d = names.size();

  FlowTable table;
  table.feature_names = names;
  table.n_cols = d;
  for (const SynthClass& c : classes) table.label_names.push_back(c.name);

  // Per-column magnitude scale, shared across classes.
  Rng scale_rng(mix_seed(options.seed, 0x5343414c));
  std::vector<double> scale(d);
  for (std::size_t j = 0; j < d; ++j)
    scale[j] = std::pow(10.0, scale_rng.uniform(0.0, 5.0));

  // Per-class marker offsets on a deterministic feature subset.
  std::vector<std::vector<double>> offsets(classes.size(),
                                           std::vector<double>(d, 0.0));
  for (std::size_t c = 0; c < classes.size(); ++c) {
    Rng marker_rng(mix_seed(options.seed, 0x4d41524b + c));
    for (int m = 0; m < 16; ++m) {
      std::size_t j = static_cast<std::size_t>(marker_rng.below(d));
      if (synth_detail::is_zero_column(j) || j == 0) continue;
      offsets[c][j] += marker_rng.uniform(1.5, 3.5) *
                       (marker_rng.below(2) ? 1.0 : -1.0);
    }
  }

  Rng rng(mix_seed(options.seed, 0x524f5753));
  table.features.reserve(options.rows * d);
  table.labels.reserve(options.rows);
  for (std::size_t r = 0; r < options.rows; ++r) {
    // Draw the class from the mixture.
    double u = rng.next_double();
    std::size_t cls = 0;
    double acc = 0.0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      acc += classes[c].weight;
      if (u < acc) {
        cls = c;
        break;
      }
    }
    table.labels.push_back(static_cast<int32_t>(cls));

    bool poison = rng.next_double() < options.nonfinite_fraction;
    for (std::size_t j = 0; j < d; ++j) {
      double v;
      if (j == 0) {
        // Destination port: the class's typical port with some drift.
        v = static_cast<double>(classes[cls].port) +
            static_cast<double>(rng.below(8)) * 100.0;
      } else if (synth_detail::is_zero_column(j)) {
        v = 0.0;
      } else {
        double z = offsets[cls][j] + rng.normal();
        v = scale[j] * std::abs(z + 2.0);  // nonnegative, flow-like
      }
      if (poison && j == synth_detail::kFlowBytesPerSec)
        v = std::numeric_limits<double>::infinity();
      if (poison && j == synth_detail::kFlowPacketsPerSec &&
          rng.next_double() < 0.5)
        v = std::numeric_limits<double>::quiet_NaN();
      table.features.push_back(v);
    }
    table.n_rows += 1;
  }
  return table;
}

// Writes the corpus as `files` daily-style CSVs under `dir`.
inline std::vector<std::filesystem::path> write_synthetic_corpus(
    const std::filesystem::path& dir, const SynthOptions& options,
    std::size_t files = 1) {
  if (files == 0) fail("InvalidConfig", "need at least one output file");
  std::filesystem::create_directories(dir);
  FlowTable table = synthesize_flows(options);
  std::vector<std::filesystem::path> paths;
  std::size_t per_file = (table.n_rows + files - 1) / files;
  for (std::size_t f = 0; f < files; ++f) {
    std::size_t begin = f * per_file;
    std::size_t end = std::min(table.n_rows, begin + per_file);
    FlowTable part;
    part.feature_names = table.feature_names;
    part.label_names = table.label_names;
    part.n_cols = table.n_cols;
    part.n_rows = end > begin ? end - begin : 0;
    part.features.assign(table.features.begin() + begin * table.n_cols,
                         table.features.begin() + end * table.n_cols);
    part.labels.assign(table.labels.begin() + begin,
                       table.labels.begin() + end);
    std::filesystem::path path =
        dir / ("synthetic-day" + std::to_string(f + 1) + ".csv");
    std::ofstream out(path);
    if (!out) fail("FileNotFound", "cannot write " + path.string());
    write_csv(part, out);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace nids
