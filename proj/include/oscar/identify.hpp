#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "oscar/loss.hpp"
#include "oscar/types.hpp"

namespace oscar {

// Per-class non-negative scores; entries for classes outside the
// retrieved sets are 0.
using ScoreVector = Vec;

// Dual k-NN state: class proxies plus transformed reference samples with
// their multi-hot labels. Immutable after build; queries are pure.
struct IdentificationIndex {
  Mat proxies;          // W x d_o
  Mat references;       // N x d_o
  Eigen::MatrixXi reference_labels;  // N x W multi-hot
  Index neighbors = 40;    // b
  double score_weight = 2.0;  // theta
  double threshold = 0.3;     // tau

  Index num_classes() const { return proxies.rows(); }
  Index num_references() const { return references.rows(); }
  void validate() const;
};

// Reciprocal cosine distances to the b nearest proxies; distances are
// floored at a small epsilon so an exact match stays finite.
ScoreVector proxy_scores(const Vec& target, const IdentificationIndex& index);

// Each of the b nearest reference samples adds its reciprocal distance to
// every class it is labeled with.
ScoreVector sample_scores(const Vec& target, const IdentificationIndex& index);

struct Decision {
  ScoreVector scores;              // proxy + theta * sample
  std::vector<Index> ranking;      // classes by descending score, ties by index
  std::vector<Index> predicted;    // classes with score/max >= tau
};

Decision combine_and_decide(const Vec& target, const IdentificationIndex& index);

void save_index(const IdentificationIndex& index, const std::filesystem::path& path,
                const std::string& config_echo);
IdentificationIndex load_index(const std::filesystem::path& path,
                               std::string* config_echo = nullptr);

inline constexpr double kDistanceFloor = 1e-8;

}  // namespace oscar
