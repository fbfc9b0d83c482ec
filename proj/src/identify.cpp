#include "oscar/identify.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace oscar {

namespace {

constexpr char kIndexMagic[] = "OSIX";
constexpr uint32_t kIndexVersion = 1;

// Indices of the b nearest rows by cosine distance, ties broken by row
// index so retrieved sets grow monotonically with b.
std::vector<Index> nearest_rows(const Vec& target, const Mat& rows, Index b) {
  const Index n = rows.rows();
  std::vector<std::pair<double, Index>> dist(n);
  for (Index i = 0; i < n; ++i)
    dist[i] = {cosine_distance(target, rows.row(i).transpose()), i};
  std::sort(dist.begin(), dist.end());
  std::vector<Index> out(static_cast<size_t>(std::min(b, n)));
  for (size_t i = 0; i < out.size(); ++i) out[i] = dist[i].second;
  return out;
}

double reciprocal_distance(const Vec& target, const Vec& row) {
  return 1.0 / std::max(cosine_distance(target, row), kDistanceFloor);
}

}  // namespace

void IdentificationIndex::validate() const {
  if (neighbors < 1) throw std::invalid_argument("index: neighbors must be >= 1");
  if (neighbors > num_classes() || neighbors > num_references())
    throw std::invalid_argument(
        "index: neighbors exceeds proxy or reference count");
  if (threshold < 0.0 || threshold > 1.0)
    throw std::invalid_argument("index: threshold out of [0,1]");
  if (score_weight < 0.0)
    throw std::invalid_argument("index: score_weight must be >= 0");
  if (reference_labels.rows() != references.rows() ||
      reference_labels.cols() != proxies.rows())
    throw std::invalid_argument("index: label shape mismatch");
}

ScoreVector proxy_scores(const Vec& target, const IdentificationIndex& index) {
  ScoreVector scores = ScoreVector::Zero(index.num_classes());
  for (Index j : nearest_rows(target, index.proxies, index.neighbors))
    scores[j] = reciprocal_distance(target, index.proxies.row(j).transpose());
  return scores;
}

ScoreVector sample_scores(const Vec& target, const IdentificationIndex& index) {
  ScoreVector scores = ScoreVector::Zero(index.num_classes());
  for (Index i : nearest_rows(target, index.references, index.neighbors)) {
    const double contribution =
        reciprocal_distance(target, index.references.row(i).transpose());
    for (Index j = 0; j < index.num_classes(); ++j)
      if (index.reference_labels(i, j) == 1) scores[j] += contribution;
  }
  return scores;
}

Decision combine_and_decide(const Vec& target, const IdentificationIndex& index) {
  Decision d;
  d.scores = proxy_scores(target, index) +
             index.score_weight * sample_scores(target, index);

  d.ranking.resize(static_cast<size_t>(index.num_classes()));
  std::iota(d.ranking.begin(), d.ranking.end(), Index{0});
  std::stable_sort(d.ranking.begin(), d.ranking.end(),
                   [&](Index a, Index b) { return d.scores[a] > d.scores[b]; });

  const double max_score = d.scores.maxCoeff();
  if (max_score <= 0.0) {
    std::cerr << "combine_and_decide: all scores zero, empty prediction\n";
    return d;
  }
  for (Index j = 0; j < index.num_classes(); ++j)
    if (d.scores[j] / max_score >= index.threshold) d.predicted.push_back(j);
  return d;
}

namespace {

void write_mat(std::ofstream& out, const Mat& m) {
  const uint64_t rows = static_cast<uint64_t>(m.rows());
  const uint64_t cols = static_cast<uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Mat read_mat(std::ifstream& in) {
  uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  return m;
}

}  // namespace

void save_index(const IdentificationIndex& index, const std::filesystem::path& path,
                const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write index: " + path.string());
  out.write(kIndexMagic, 4);
  out.write(reinterpret_cast<const char*>(&kIndexVersion), sizeof(kIndexVersion));
  const uint64_t echo_len = config_echo.size();
  out.write(reinterpret_cast<const char*>(&echo_len), sizeof(echo_len));
  out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  write_mat(out, index.proxies);
  write_mat(out, index.references);
  write_mat(out, index.reference_labels.cast<double>());
  out.write(reinterpret_cast<const char*>(&index.neighbors), sizeof(index.neighbors));
  out.write(reinterpret_cast<const char*>(&index.score_weight),
            sizeof(index.score_weight));
  out.write(reinterpret_cast<const char*>(&index.threshold), sizeof(index.threshold));
}

IdentificationIndex load_index(const std::filesystem::path& path,
                               std::string* config_echo) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index: " + path.string());
  char magic[4];
  in.read(magic, 4);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (std::string(magic, 4) != kIndexMagic || version != kIndexVersion)
    throw std::runtime_error("bad index header: " + path.string());
  uint64_t echo_len = 0;
  in.read(reinterpret_cast<char*>(&echo_len), sizeof(echo_len));
  std::string echo(echo_len, '\0');
  in.read(echo.data(), static_cast<std::streamsize>(echo_len));
  if (config_echo) *config_echo = echo;

  IdentificationIndex index;
  index.proxies = read_mat(in);
  index.references = read_mat(in);
  index.reference_labels = read_mat(in).cast<int>();
  in.read(reinterpret_cast<char*>(&index.neighbors), sizeof(index.neighbors));
  in.read(reinterpret_cast<char*>(&index.score_weight), sizeof(index.score_weight));
  in.read(reinterpret_cast<char*>(&index.threshold), sizeof(index.threshold));
  if (!in) throw std::runtime_error("truncated index: " + path.string());
  index.validate();
  return index;
}

}  // namespace oscar
