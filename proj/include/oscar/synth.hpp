#pragma once

#include <cstdint>
#include <utility>

#include "oscar/metrics.hpp"
#include "oscar/trace.hpp"

namespace oscar {

// Each class is a random template of signed bursts; per-trace noise flips
// or resizes a fraction of the bursts. Multi-tab sessions start pages at
// cumulative offsets drawn from gap_range.
struct SynthConfig {
  Index n_classes = 20;
  Index traces_per_class = 20;
  Index signature_length = 12;  // bursts per class template
  double noise_rate = 0.1;
  Index burst_scale = 16;  // max packets per burst
  uint64_t seed = 0;
  Index max_tabs = 3;  // 1..5
  std::pair<double, double> gap_range = {3.0, 10.0};  // seconds
  Index n_sessions = 0;  // 0 = n_classes * traces_per_class

  void validate() const;
};

// Single-tab traces, one distinct burst signature per class, labels
// single-hot. Deterministic per seed.
Dataset generate_single_tab(const SynthConfig& config);

// Sessions with tab counts uniform in [1, max_tabs], built by offsetting
// and time-merging single-tab traces of distinct classes. Labels are
// unions.
Dataset generate_multi_tab(const SynthConfig& config, const Dataset& singles);

// k-NN over padded raw direction vectors with cosine distance, scored
// with the sample-score rule only. The comparison floor for the pipeline.
EvalReport raw_feature_baseline(const Dataset& train, const Dataset& test,
                                Index neighbors, Index input_dim,
                                const std::vector<Index>& k_recall = kDefaultRecallKs,
                                const std::vector<Index>& k_ap = kDefaultApKs);

}  // namespace oscar
