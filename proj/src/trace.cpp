#include "oscar/trace.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace oscar {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::validation: return "validation";
    case SplitTag::test: return "test";
  }
  return "train";
}

SplitTag split_tag_from_string(const std::string& s) {
  if (s == "train") return SplitTag::train;
  if (s == "validation") return SplitTag::validation;
  if (s == "test") return SplitTag::test;
  throw DataError("unknown split tag: " + s);
}

int Dataset::class_index(const std::string& id) const {
  auto it = std::find(class_catalog.begin(), class_catalog.end(), id);
  return it == class_catalog.end() ? -1
                                   : static_cast<int>(it - class_catalog.begin());
}

std::string validate_trace(const Trace& trace, int num_classes) {
  if (trace.directions.size() != trace.timestamps.size())
    return "directions/timestamps length mismatch";
  for (int8_t d : trace.directions)
    if (d != 1 && d != -1) return "direction not in {+1,-1}";
  if (!trace.timestamps.empty()) {
    if (trace.timestamps.front() != 0.0) return "timestamps not zero-based";
    for (size_t i = 1; i < trace.timestamps.size(); ++i)
      if (trace.timestamps[i] < trace.timestamps[i - 1])
        return "timestamps not monotone";
  }
  if (trace.labels.size() != num_classes) return "label width mismatch";
  if (trace.labels.sum() < 1) return "no label set";
  for (Index j = 0; j < trace.labels.size(); ++j)
    if (trace.labels[j] != 0 && trace.labels[j] != 1)
      return "label entry not in {0,1}";
  return {};
}

namespace {

Trace trace_from_parts(const std::vector<double>& dirs,
                       const std::vector<double>& ts,
                       const std::vector<std::string>& label_ids,
                       const Dataset& ds, const std::string& where) {
  Trace t;
  t.directions.reserve(dirs.size());
  for (double d : dirs) t.directions.push_back(static_cast<int8_t>(d));
  t.timestamps = ts;
  t.labels = LabelVec::Zero(ds.num_classes());
  for (const auto& id : label_ids) {
    int j = ds.class_index(id);
    if (j < 0) throw DataError(where + ": unknown label id '" + id + "'");
    t.labels[j] = 1;
  }
  return t;
}

Dataset load_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DataError("cannot open manifest: " + (dir / "manifest.json").string());
  json m = json::parse(in);
  Dataset ds;
  ds.class_catalog = m.at("classes").get<std::vector<std::string>>();
  if (m.contains("unmonitored_sentinel"))
    ds.unmonitored_sentinel = m["unmonitored_sentinel"].get<std::string>();
  ds.split_tag = split_tag_from_string(m.value("split", "train"));
  std::vector<std::string> seen = ds.class_catalog;
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw DataError("class catalog entries are not unique");
  return ds;
}

Dataset load_ndjson(const fs::path& dir) {
  Dataset ds = load_manifest(dir);
  std::ifstream in(dir / "records.ndjson");
  if (!in) throw DataError("cannot open records: " + (dir / "records.ndjson").string());
  std::string line;
  size_t lineno = 0;
  size_t rejected = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string where = "line " + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": malformed record (" + e.what() + ")");
    }
    Trace t = trace_from_parts(rec.at("dirs").get<std::vector<double>>(),
                               rec.at("ts").get<std::vector<double>>(),
                               rec.at("labels").get<std::vector<std::string>>(),
                               ds, where);
    std::string reason = validate_trace(t, ds.num_classes());
    if (!reason.empty()) {
      std::cerr << "rejected record at " << where << ": " << reason << "\n";
      ++rejected;
      continue;
    }
    ds.traces.push_back(std::move(t));
  }
  if (rejected > 0)
    std::cerr << "load_dataset: rejected " << rejected << " invalid record(s)\n";
  return ds;
}

Dataset load_csv_dir(const fs::path& dir) {
  Dataset ds = load_manifest(dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string header;
    if (!std::getline(in, header) || header.rfind("labels,", 0) != 0)
      throw ParseError(file.string() + ": missing 'labels,' header line");
    std::vector<std::string> label_ids;
    std::stringstream hs(header.substr(7));
    std::string id;
    while (std::getline(hs, id, ';'))
      if (!id.empty()) label_ids.push_back(id);
    std::vector<double> dirs, ts;
    std::string line;
    size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      double d, t;
      char comma;
      std::istringstream ls(line);
      if (!(ls >> d >> comma >> t) || comma != ',')
        throw ParseError(file.string() + ": line " + std::to_string(lineno) +
                         ": malformed 'dir,ts' row");
      dirs.push_back(d);
      ts.push_back(t);
    }
    Trace t = trace_from_parts(dirs, ts, label_ids, ds, file.string());
    std::string reason = validate_trace(t, ds.num_classes());
    if (!reason.empty()) {
      std::cerr << "rejected record " << file << ": " << reason << "\n";
      continue;
    }
    ds.traces.push_back(std::move(t));
  }
  return ds;
}

}  // namespace

Dataset load_dataset(const fs::path& path, DatasetFormat format) {
  if (!fs::exists(path)) throw DataError("dataset path does not exist: " + path.string());
  return format == DatasetFormat::ndjson ? load_ndjson(path) : load_csv_dir(path);
}

void save_dataset(const Dataset& dataset, const fs::path& path,
                  DatasetFormat format) {
  fs::create_directories(path);
  json m;
  m["classes"] = dataset.class_catalog;
  if (!dataset.unmonitored_sentinel.empty())
    m["unmonitored_sentinel"] = dataset.unmonitored_sentinel;
  m["split"] = to_string(dataset.split_tag);
  {
    std::ofstream out(path / "manifest.json");
    out << m.dump(2) << "\n";
  }
  if (format == DatasetFormat::ndjson) {
    std::ofstream out(path / "records.ndjson");
    out.precision(17);
    for (const Trace& t : dataset.traces) {
      json rec;
      rec["dirs"] = json::array();
      for (int8_t d : t.directions) rec["dirs"].push_back(static_cast<int>(d));
      rec["ts"] = t.timestamps;
      rec["labels"] = json::array();
      for (Index j = 0; j < t.labels.size(); ++j)
        if (t.labels[j]) rec["labels"].push_back(dataset.class_catalog[j]);
      out << rec.dump() << "\n";
    }
  } else {
    size_t i = 0;
    for (const Trace& t : dataset.traces) {
      char name[32];
      std::snprintf(name, sizeof(name), "trace_%06zu.csv", i++);
      std::ofstream out(path / name);
      out.precision(17);
      out << "labels,";
      bool first = true;
      for (Index j = 0; j < t.labels.size(); ++j)
        if (t.labels[j]) {
          if (!first) out << ";";
          out << dataset.class_catalog[j];
          first = false;
        }
      out << "\n";
      for (size_t k = 0; k < t.directions.size(); ++k)
        out << static_cast<int>(t.directions[k]) << "," << t.timestamps[k] << "\n";
    }
  }
}

Dataset filter_short(const Dataset& dataset, Index min_packets) {
  if (min_packets < 0) throw DataError("min_packets must be >= 0");
  Dataset out = dataset;
  out.traces.clear();
  for (const Trace& t : dataset.traces)
    if (t.length() >= min_packets) out.traces.push_back(t);
  if (out.traces.empty() && !dataset.traces.empty())
    std::cerr << "filter_short: all " << dataset.size()
              << " traces shorter than " << min_packets << "\n";
  return out;
}

ModelInput to_model_input(const Trace& trace, Index input_dim) {
  if (input_dim <= 0) throw DataError("input_dim must be > 0");
  ModelInput mi;
  mi.padded_directions = Vec::Zero(input_dim);
  Index n = std::min<Index>(trace.length(), input_dim);
  for (Index i = 0; i < n; ++i)
    mi.padded_directions[i] = static_cast<double>(trace.directions[i]);
  return mi;
}

std::array<Dataset, 3> split_dataset(const Dataset& dataset,
                                     const SplitRatios& ratios, uint64_t seed) {
  std::vector<Index> order(dataset.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const Index n = dataset.size();
  const Index n_train = static_cast<Index>(ratios.train * static_cast<double>(n));
  const Index n_val = static_cast<Index>(ratios.validation * static_cast<double>(n));

  std::array<Dataset, 3> parts;
  for (auto& p : parts) {
    p.class_catalog = dataset.class_catalog;
    p.unmonitored_sentinel = dataset.unmonitored_sentinel;
  }
  parts[0].split_tag = SplitTag::train;
  parts[1].split_tag = SplitTag::validation;
  parts[2].split_tag = SplitTag::test;
  for (Index i = 0; i < n; ++i) {
    const Trace& t = dataset.traces[order[i]];
    if (i < n_train)
      parts[0].traces.push_back(t);
    else if (i < n_train + n_val)
      parts[1].traces.push_back(t);
    else
      parts[2].traces.push_back(t);
  }
  return parts;
}

}  // namespace oscar
