#pragma once

#include <cstdint>
#include <vector>

#include "oscar/trace.hpp"

namespace oscar {

// Maximal run of consecutive same-direction packets, [start, end).
struct Burst {
  Index start = 0;
  Index end = 0;
  int8_t direction = 0;

  Index size() const { return end - start; }
};

enum class MergePairing { random, exhaustive_sampled };

struct AugmentationConfig {
  double exchange_ratio = 0.05;  // m_e
  uint64_t rng_seed = 0;
  MergePairing merge_pairing = MergePairing::random;
};

// Time-ordered interleave of two traces, truncated to input_dim packets.
// Output labels are the union of both parents; timestamps are re-zeroed
// to the merged first packet. Ties take a's packet first, so the relative
// order within each parent is preserved.
Trace merge_traces(const Trace& a, const Trace& b, Index input_dim);

// Partitions a direction sequence into maximal bursts.
std::vector<Burst> extract_bursts(const std::vector<int8_t>& directions);

// Swaps floor(num_bursts * m_e) sampled bursts with their successor burst.
// A sampled last burst swaps with its predecessor instead; a single-burst
// trace is returned unchanged. Labels and the per-direction packet
// multiset are preserved.
Trace exchange_bursts(const Trace& trace, const AugmentationConfig& config);

// Appends n_merged merge-generated and n_exchanged exchange-generated
// traces to the original dataset. Deterministic given config.rng_seed.
Dataset augment_dataset(const Dataset& dataset, const AugmentationConfig& config,
                        Index n_merged, Index n_exchanged);

}  // namespace oscar
