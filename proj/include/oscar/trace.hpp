#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscar/types.hpp"

namespace oscar {

// Raised when a record file cannot be parsed. Carries line/offset context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for semantically invalid data (unknown labels, catalog mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One browsing session: per-packet directions (+1 outgoing, -1 incoming),
// timestamps in seconds relative to the first packet, and a multi-hot
// label vector over the class catalog.
struct Trace {
  std::vector<int8_t> directions;
  std::vector<double> timestamps;
  LabelVec labels;

  Index length() const { return static_cast<Index>(directions.size()); }
  int label_count() const { return labels.sum(); }
};

enum class SplitTag { train, validation, test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

// Ordered collection of traces plus the class catalog. The catalog lists
// monitored webpage ids; when `unmonitored_sentinel` is non-empty its id
// occupies the last catalog slot and represents all unmonitored pages.
struct Dataset {
  std::vector<Trace> traces;
  std::vector<std::string> class_catalog;
  std::string unmonitored_sentinel;  // empty in the closed world
  SplitTag split_tag = SplitTag::train;

  Index size() const { return static_cast<Index>(traces.size()); }
  int num_classes() const { return static_cast<int>(class_catalog.size()); }
  int class_index(const std::string& id) const;  // -1 when absent
};

// Fixed-length encoder input: the direction sequence padded with zeros
// (or truncated) to exactly d_i entries.
struct ModelInput {
  Vec padded_directions;
};

inline constexpr int kDefaultInputDim = 10000;
inline constexpr int kDefaultMinPackets = 1000;

// Checks the Trace invariants; returns an empty string when valid,
// otherwise a human-readable reason.
std::string validate_trace(const Trace& trace, int num_classes);

enum class DatasetFormat { ndjson, csv_dir };

// Loads a dataset from disk. ndjson: a directory with manifest.json and
// records.ndjson. csv-dir: manifest.json plus one CSV file per trace.
// Invalid records are rejected with a per-record report on stderr.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path,
                  DatasetFormat format = DatasetFormat::ndjson);

// Drops traces with fewer than min_packets packets, preserving order.
Dataset filter_short(const Dataset& dataset, Index min_packets);

// Pads (or truncates) the direction sequence to exactly input_dim entries.
ModelInput to_model_input(const Trace& trace, Index input_dim);

// Deterministic shuffled split into train/validation/test by sample.
struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};
std::array<Dataset, 3> split_dataset(const Dataset& dataset,
                                     const SplitRatios& ratios,
                                     uint64_t seed);

}  // namespace oscar
