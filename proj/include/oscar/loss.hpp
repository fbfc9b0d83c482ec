#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "oscar/types.hpp"

namespace oscar {

struct LossConfig {
  double margin = 0.1;
  double beta = 4.5;  // weight of the sample-based loss
};

// W learnable class representatives, one d_o-dimensional row per class.
struct ProxySet {
  Mat proxies;  // W x d_o

  Index num_classes() const { return proxies.rows(); }
  Index dim() const { return proxies.cols(); }
};

// Unit-scaled random directions, deterministic per seed.
ProxySet init_proxies(Index num_classes, Index dim, uint64_t seed);

// Strict cosine similarity; throws on an all-zero input.
double cosine_similarity(const Vec& u, const Vec& v);

// 1 - cosine_similarity, in [0, 2].
double cosine_distance(const Vec& u, const Vec& v);

// All unordered pairs (i, j), i < j, where both samples carry more than
// one label and their label sets are disjoint.
std::vector<std::pair<Index, Index>> mine_irrelevant_pairs(
    const Eigen::MatrixXi& labels);

// Loss values plus gradients w.r.t. embeddings and proxies. Gradients are
// filled only when requested.
struct LossResult {
  double proxy_loss = 0.0;
  double sample_loss = 0.0;
  double total = 0.0;
  Mat grad_embeddings;  // batch x d_o
  Mat grad_proxies;     // W x d_o
};

// Positive pairs pull cos_sim toward 1, negative pairs are hinged at the
// margin; each side is normalized by its pair count. Throws when the
// batch has no positive or no negative proxy-sample pair.
LossResult proxy_loss(const Mat& embeddings, const Eigen::MatrixXi& labels,
                      const ProxySet& proxies, const LossConfig& config,
                      bool with_grad = false);

// Mean hinge over mined irrelevant sample pairs; 0 when none are mined.
LossResult sample_loss(const Mat& embeddings, const Eigen::MatrixXi& labels,
                       const LossConfig& config, bool with_grad = false);

// proxy_loss + beta * sample_loss.
LossResult combined_loss(const Mat& embeddings, const Eigen::MatrixXi& labels,
                         const ProxySet& proxies, const LossConfig& config,
                         bool with_grad = false);

}  // namespace oscar
