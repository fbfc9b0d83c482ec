#include "oscar/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oscar {

using nlohmann::json;

namespace {

Index hits_in_top(const LabelVec& truth, const std::vector<Index>& ranking,
                  Index k) {
  Index hits = 0;
  const Index limit = std::min<Index>(k, static_cast<Index>(ranking.size()));
  for (Index t = 0; t < limit; ++t)
    if (ranking[static_cast<size_t>(t)] < truth.size() &&
        truth[ranking[static_cast<size_t>(t)]] == 1)
      ++hits;
  return hits;
}

}  // namespace

double recall_at_k(const LabelVec& true_labels, const std::vector<Index>& ranking,
                   Index k) {
  if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
  const Index truth_count = true_labels.sum();
  if (truth_count < 1)
    throw std::invalid_argument("recall_at_k: empty truth set");
  return static_cast<double>(hits_in_top(true_labels, ranking, k)) /
         static_cast<double>(truth_count);
}

double precision_at_t(const LabelVec& true_labels, const std::vector<Index>& ranking,
                      Index t) {
  if (t < 1) throw std::invalid_argument("precision_at_t: t must be >= 1");
  return static_cast<double>(hits_in_top(true_labels, ranking, t)) /
         static_cast<double>(t);
}

double ap_at_k(const LabelVec& true_labels, const std::vector<Index>& ranking,
               Index k) {
  if (k < 1) throw std::invalid_argument("ap_at_k: k must be >= 1");
  const Index truth_count = true_labels.sum();
  if (truth_count < 1) throw std::invalid_argument("ap_at_k: empty truth set");
  double sum = 0.0;
  for (Index t = 1; t <= k; ++t) sum += precision_at_t(true_labels, ranking, t);
  return sum / static_cast<double>(std::min(k, truth_count));
}

EvalReport evaluate(const IdentificationIndex& index,
                    const std::vector<EmbeddedSample>& test,
                    const std::vector<Index>& k_recall,
                    const std::vector<Index>& k_ap, Protocol protocol) {
  index.validate();
  EvalReport report;
  report.protocol = protocol;
  report.sample_count = static_cast<Index>(test.size());
  for (Index k : k_recall) report.recall_at.emplace_back(k, 0.0);
  for (Index k : k_ap) report.ap_at.emplace_back(k, 0.0);
  if (test.empty()) return report;

  for (const EmbeddedSample& sample : test) {
    if (sample.labels.size() != index.num_classes())
      throw DataError("evaluate: catalog mismatch between index and test set");
    Decision d = combine_and_decide(sample.embedding, index);
    for (auto& [k, acc] : report.recall_at)
      acc += recall_at_k(sample.labels, d.ranking, k);
    for (auto& [k, acc] : report.ap_at)
      acc += ap_at_k(sample.labels, d.ranking, k);
  }
  const double n = static_cast<double>(test.size());
  for (auto& [k, acc] : report.recall_at) acc /= n;
  for (auto& [k, acc] : report.ap_at) acc /= n;
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "protocol: " << (protocol == Protocol::closed ? "closed" : "open")
     << "  samples: " << sample_count << "\n";
  for (const auto& [k, v] : recall_at) os << "Recall@" << k << " = " << v << "\n";
  for (const auto& [k, v] : ap_at) os << "AP@" << k << " = " << v << "\n";
  return os.str();
}

std::string EvalReport::to_json() const {
  json j;
  j["protocol"] = protocol == Protocol::closed ? "closed" : "open";
  j["sample_count"] = sample_count;
  json recall = json::object(), ap = json::object();
  for (const auto& [k, v] : recall_at) recall[std::to_string(k)] = v;
  for (const auto& [k, v] : ap_at) ap[std::to_string(k)] = v;
  j["recall_at_k"] = recall;
  j["ap_at_k"] = ap;
  if (!config_echo.empty()) j["config_echo"] = json::parse(config_echo);
  return j.dump(2);
}

}  // namespace oscar
