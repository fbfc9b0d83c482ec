#pragma once

#include <string>
#include <vector>

#include "oscar/identify.hpp"
#include "oscar/trace.hpp"
#include "oscar/trainer.hpp"

namespace oscar {

enum class Protocol { closed, open };

struct EvalReport {
  std::vector<std::pair<Index, double>> recall_at;  // (k, mean Recall@k)
  std::vector<std::pair<Index, double>> ap_at;      // (k, mean AP@k)
  Index sample_count = 0;
  Protocol protocol = Protocol::closed;
  std::string config_echo;

  std::string to_text() const;
  std::string to_json() const;
};

// |truth ∩ top-k| / |truth|
double recall_at_k(const LabelVec& true_labels, const std::vector<Index>& ranking,
                   Index k);

// |truth ∩ top-t| / t
double precision_at_t(const LabelVec& true_labels, const std::vector<Index>& ranking,
                      Index t);

// (sum_{t=1..k} Precision@t) / min(k, |truth|)
double ap_at_k(const LabelVec& true_labels, const std::vector<Index>& ranking,
               Index k);

// Scores every embedded test sample against the index and averages the
// per-sample metrics. The ranking is the pre-threshold combined-score
// ordering.
EvalReport evaluate(const IdentificationIndex& index,
                    const std::vector<EmbeddedSample>& test,
                    const std::vector<Index>& k_recall,
                    const std::vector<Index>& k_ap, Protocol protocol);

inline const std::vector<Index> kDefaultRecallKs = {5, 10, 15, 20, 25, 30};
inline const std::vector<Index> kDefaultApKs = {1, 2, 3, 4, 5};

}  // namespace oscar
