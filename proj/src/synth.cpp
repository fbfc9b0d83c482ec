#include "oscar/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "oscar/augment.hpp"

namespace oscar {

void SynthConfig::validate() const {
  if (n_classes < 2) throw DataError("synth: n_classes must be >= 2");
  if (noise_rate < 0.0 || noise_rate > 1.0)
    throw DataError("synth: noise_rate out of [0,1]");
  if (max_tabs < 1 || max_tabs > 5)
    throw DataError("synth: max_tabs must be in [1,5]");
  if (traces_per_class < 1 || signature_length < 1 || burst_scale < 1)
    throw DataError("synth: counts must be positive");
  if (gap_range.first < 0.0 || gap_range.second < gap_range.first)
    throw DataError("synth: invalid gap_range");
}

namespace {

struct SignatureBurst {
  int8_t direction;
  Index length;
};

using Signature = std::vector<SignatureBurst>;

std::vector<Signature> make_signatures(const SynthConfig& cfg,
                                       std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> burst_len(1, cfg.burst_scale);
  std::bernoulli_distribution coin(0.5);
  std::vector<Signature> sigs(static_cast<size_t>(cfg.n_classes));
  for (auto& sig : sigs)
    for (Index b = 0; b < cfg.signature_length; ++b)
      sig.push_back({coin(rng) ? int8_t{1} : int8_t{-1}, burst_len(rng)});
  return sigs;
}

// Renders a signature into a trace; noise flips or resizes a fraction of
// the bursts. Timestamps get per-packet jitter so merges stay diverse.
Trace render(const Signature& sig, const SynthConfig& cfg, Index class_idx,
             std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> burst_len(1, cfg.burst_scale);
  std::bernoulli_distribution noisy(cfg.noise_rate);
  std::bernoulli_distribution flip(0.5);
  // Bursts are temporally compact; think-time gaps separate them, so
  // overlapping pages interleave at burst granularity.
  std::uniform_real_distribution<double> intra_dt(0.0002, 0.002);
  std::uniform_real_distribution<double> inter_gap(0.02, 0.2);

  Trace t;
  t.labels = LabelVec::Zero(cfg.n_classes);
  t.labels[class_idx] = 1;
  double now = 0.0;
  for (const SignatureBurst& burst : sig) {
    int8_t dir = burst.direction;
    Index len = burst.length;
    if (cfg.noise_rate > 0.0 && noisy(rng)) {
      if (flip(rng))
        dir = static_cast<int8_t>(-dir);
      else
        len = burst_len(rng);
    }
    for (Index i = 0; i < len; ++i) {
      t.directions.push_back(dir);
      t.timestamps.push_back(now);
      now += intra_dt(rng);
    }
    now += inter_gap(rng);
  }
  return t;
}

}  // namespace

Dataset generate_single_tab(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  Dataset ds;
  for (Index c = 0; c < config.n_classes; ++c) {
    char name[16];
    std::snprintf(name, sizeof(name), "page%03lld", static_cast<long long>(c));
    ds.class_catalog.emplace_back(name);
  }
  const auto signatures = make_signatures(config, rng);
  for (Index c = 0; c < config.n_classes; ++c) {
    // Per-trace RNG keeps the direction sequence identical under
    // noise_rate=0 while timestamps still jitter deterministically.
    for (Index k = 0; k < config.traces_per_class; ++k) {
      std::mt19937_64 trace_rng(rng());
      ds.traces.push_back(
          render(signatures[static_cast<size_t>(c)], config, c, trace_rng));
    }
  }
  return ds;
}

Dataset generate_multi_tab(const SynthConfig& config, const Dataset& singles) {
  config.validate();
  if (singles.size() == 0) throw DataError("generate_multi_tab: empty singles");

  // Group single-tab traces by class.
  std::vector<std::vector<Index>> by_class(
      static_cast<size_t>(singles.num_classes()));
  for (Index i = 0; i < singles.size(); ++i) {
    const LabelVec& y = singles.traces[i].labels;
    for (Index j = 0; j < y.size(); ++j)
      if (y[j]) by_class[static_cast<size_t>(j)].push_back(i);
  }
  for (const auto& group : by_class)
    if (group.empty())
      throw DataError("generate_multi_tab: a class has no single-tab traces");

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<Index> tab_count(1, config.max_tabs);
  std::uniform_real_distribution<double> gap(config.gap_range.first,
                                             config.gap_range.second);

  const Index n_sessions = config.n_sessions > 0
                               ? config.n_sessions
                               : config.n_classes * config.traces_per_class;
  Dataset out;
  out.class_catalog = singles.class_catalog;
  out.unmonitored_sentinel = singles.unmonitored_sentinel;

  std::vector<Index> classes(static_cast<size_t>(singles.num_classes()));
  std::iota(classes.begin(), classes.end(), Index{0});

  for (Index s = 0; s < n_sessions; ++s) {
    const Index tabs = tab_count(rng);
    std::shuffle(classes.begin(), classes.end(), rng);

    Trace session;
    double offset = 0.0;
    for (Index t = 0; t < tabs; ++t) {
      const auto& group = by_class[static_cast<size_t>(classes[t])];
      std::uniform_int_distribution<size_t> pick(0, group.size() - 1);
      Trace tab = singles.traces[group[pick(rng)]];
      for (double& ts : tab.timestamps) ts += offset;
      if (t == 0)
        session = std::move(tab);
      else
        session = merge_traces(session, tab, session.length() + tab.length());
      offset += gap(rng);
    }
    // merge_traces re-zeroes, single-tab sessions already start at 0
    out.traces.push_back(std::move(session));
  }
  return out;
}

EvalReport raw_feature_baseline(const Dataset& train, const Dataset& test,
                                Index neighbors, Index input_dim,
                                const std::vector<Index>& k_recall,
                                const std::vector<Index>& k_ap) {
  if (train.class_catalog != test.class_catalog)
    throw DataError("raw_feature_baseline: catalog mismatch");

  IdentificationIndex index;
  // Only the sample-score rule is used; proxies carry no information here.
  index.proxies = Mat::Zero(train.num_classes(), 1);
  index.references = Mat(train.size(), input_dim);
  index.reference_labels = Eigen::MatrixXi(train.size(), train.num_classes());
  for (Index i = 0; i < train.size(); ++i) {
    index.references.row(i) =
        to_model_input(train.traces[i], input_dim).padded_directions;
    index.reference_labels.row(i) = train.traces[i].labels.transpose();
  }
  index.neighbors = std::min(neighbors, train.size());

  EvalReport report;
  report.protocol = train.unmonitored_sentinel.empty() ? Protocol::closed
                                                       : Protocol::open;
  report.sample_count = test.size();
  for (Index k : k_recall) report.recall_at.emplace_back(k, 0.0);
  for (Index k : k_ap) report.ap_at.emplace_back(k, 0.0);
  if (test.size() == 0) return report;

  for (const Trace& trace : test.traces) {
    const Vec target = to_model_input(trace, input_dim).padded_directions;
    ScoreVector scores = sample_scores(target, index);
    std::vector<Index> ranking(static_cast<size_t>(scores.size()));
    std::iota(ranking.begin(), ranking.end(), Index{0});
    std::stable_sort(ranking.begin(), ranking.end(),
                     [&](Index a, Index b) { return scores[a] > scores[b]; });
    for (auto& [k, acc] : report.recall_at)
      acc += recall_at_k(trace.labels, ranking, k);
    for (auto& [k, acc] : report.ap_at) acc += ap_at_k(trace.labels, ranking, k);
  }
  const double n = static_cast<double>(test.size());
  for (auto& [k, acc] : report.recall_at) acc /= n;
  for (auto& [k, acc] : report.ap_at) acc /= n;
  return report;
}

}  // namespace oscar
