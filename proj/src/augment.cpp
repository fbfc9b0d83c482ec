#include "oscar/augment.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace oscar {

Trace merge_traces(const Trace& a, const Trace& b, Index input_dim) {
  if (a.length() == 0 && b.length() == 0)
    throw DataError("merge_traces: nothing to merge");
  if (a.labels.size() != b.labels.size())
    throw DataError("merge_traces: label width mismatch");

  Trace out;
  out.labels = a.labels.cwiseMax(b.labels);  // y_a ∪ y_b

  const Index total = std::min<Index>(a.length() + b.length(), input_dim);
  out.directions.reserve(total);
  out.timestamps.reserve(total);

  Index ia = 0, ib = 0;
  while (static_cast<Index>(out.directions.size()) < total) {
    bool take_a;
    if (ia >= a.length())
      take_a = false;
    else if (ib >= b.length())
      take_a = true;
    else
      take_a = a.timestamps[ia] <= b.timestamps[ib];
    if (take_a) {
      out.directions.push_back(a.directions[ia]);
      out.timestamps.push_back(a.timestamps[ia]);
      ++ia;
    } else {
      out.directions.push_back(b.directions[ib]);
      out.timestamps.push_back(b.timestamps[ib]);
      ++ib;
    }
  }
  if (!out.timestamps.empty()) {
    const double t0 = out.timestamps.front();
    for (double& t : out.timestamps) t -= t0;
  }
  return out;
}

std::vector<Burst> extract_bursts(const std::vector<int8_t>& directions) {
  if (directions.empty())
    throw DataError("extract_bursts: empty direction sequence");
  std::vector<Burst> bursts;
  Index start = 0;
  const Index n = static_cast<Index>(directions.size());
  for (Index i = 1; i <= n; ++i) {
    if (i == n || directions[i] != directions[start]) {
      bursts.push_back({start, i, directions[start]});
      start = i;
    }
  }
  return bursts;
}

namespace {

// Swaps the two adjacent burst blocks [b1.start,b1.end) and [b2.start,b2.end).
void swap_adjacent_blocks(std::vector<int8_t>& dirs, Burst& b1, Burst& b2) {
  std::rotate(dirs.begin() + b1.start, dirs.begin() + b2.start,
              dirs.begin() + b2.end);
  const Index len1 = b1.size(), len2 = b2.size();
  b2.start = b1.start;
  b2.end = b1.start + len2;
  b1.start = b2.end;
  b1.end = b1.start + len1;
  std::swap(b1, b2);
}

}  // namespace

Trace exchange_bursts(const Trace& trace, const AugmentationConfig& config) {
  if (trace.length() == 0) throw DataError("exchange_bursts: empty trace");
  if (config.exchange_ratio < 0.0 || config.exchange_ratio > 1.0)
    throw DataError("exchange_bursts: exchange_ratio out of [0,1]");

  Trace out = trace;
  std::vector<Burst> bursts = extract_bursts(out.directions);
  const Index num_bursts = static_cast<Index>(bursts.size());
  const Index ex_num = static_cast<Index>(
      static_cast<double>(num_bursts) * config.exchange_ratio);
  if (ex_num == 0 || num_bursts < 2) return out;

  // Sample ex_num burst indices without replacement, applied left-to-right.
  std::vector<Index> indices(num_bursts);
  std::iota(indices.begin(), indices.end(), Index{0});
  std::mt19937_64 rng(config.rng_seed);
  std::shuffle(indices.begin(), indices.end(), rng);
  indices.resize(ex_num);
  std::sort(indices.begin(), indices.end());

  for (Index idx : indices) {
    if (idx == num_bursts - 1)
      swap_adjacent_blocks(out.directions, bursts[idx - 1], bursts[idx]);
    else
      swap_adjacent_blocks(out.directions, bursts[idx], bursts[idx + 1]);
  }
  return out;
}

Dataset augment_dataset(const Dataset& dataset, const AugmentationConfig& config,
                        Index n_merged, Index n_exchanged) {
  if (dataset.size() == 0) throw DataError("augment_dataset: empty dataset");
  if (n_merged > 0 && dataset.size() < 2)
    throw DataError("augment_dataset: merging needs at least two traces");

  Dataset out = dataset;
  std::mt19937_64 rng(config.rng_seed);
  const Index n = dataset.size();

  std::uniform_int_distribution<Index> pick(0, n - 1);
  for (Index m = 0; m < n_merged; ++m) {
    Index i, j;
    if (config.merge_pairing == MergePairing::exhaustive_sampled) {
      // Walk distinct pairs in a fixed order, restarting as needed.
      i = m % n;
      j = (m / n + 1 + i) % n;
      if (i == j) j = (j + 1) % n;
    } else {
      i = pick(rng);
      do { j = pick(rng); } while (j == i);
    }
    const Trace& a = dataset.traces[i];
    const Trace& b = dataset.traces[j];
    out.traces.push_back(merge_traces(a, b, a.length() + b.length()));
  }

  for (Index e = 0; e < n_exchanged; ++e) {
    AugmentationConfig per_trace = config;
    per_trace.rng_seed = rng();
    out.traces.push_back(exchange_bursts(dataset.traces[pick(rng)], per_trace));
  }
  return out;
}

}  // namespace oscar
