#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "oscar/synth.hpp"

using namespace oscar;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_classes = 5;
  cfg.traces_per_class = 8;
  cfg.signature_length = 6;
  cfg.burst_scale = 8;
  cfg.noise_rate = 0.0;
  cfg.max_tabs = 3;
  cfg.seed = 123;
  return cfg;
}

}  // namespace

TEST_CASE("noise_rate=0 gives identical direction sequences per class") {
  Dataset ds = generate_single_tab(small_config());
  REQUIRE(ds.size() == 40);
  for (Index c = 0; c < 5; ++c) {
    const auto& first = ds.traces[c * 8].directions;
    for (Index k = 1; k < 8; ++k)
      REQUIRE(ds.traces[c * 8 + k].directions == first);
  }
  // distinct classes differ
  CHECK(ds.traces[0].directions != ds.traces[8].directions);
}

TEST_CASE("generation is deterministic per seed") {
  SynthConfig cfg = small_config();
  cfg.noise_rate = 0.2;
  Dataset a = generate_single_tab(cfg);
  Dataset b = generate_single_tab(cfg);
  REQUIRE(a.size() == b.size());
  for (Index i = 0; i < a.size(); ++i) {
    REQUIRE(a.traces[i].directions == b.traces[i].directions);
    REQUIRE(a.traces[i].timestamps == b.traces[i].timestamps);
  }
  Dataset ma = generate_multi_tab(cfg, a);
  Dataset mb = generate_multi_tab(cfg, b);
  for (Index i = 0; i < ma.size(); ++i)
    REQUIRE(ma.traces[i].directions == mb.traces[i].directions);
}

TEST_CASE("multi-tab sessions satisfy trace invariants") {
  SynthConfig cfg = small_config();
  cfg.noise_rate = 0.1;
  Dataset singles = generate_single_tab(cfg);
  Dataset sessions = generate_multi_tab(cfg, singles);
  for (const Trace& t : sessions.traces) {
    REQUIRE(validate_trace(t, sessions.num_classes()).empty());
    CHECK(t.label_count() >= 1);
    CHECK(t.label_count() <= cfg.max_tabs);
  }
}

TEST_CASE("max_tabs=1 reproduces single-tab traces") {
  SynthConfig cfg = small_config();
  cfg.max_tabs = 1;
  Dataset singles = generate_single_tab(cfg);
  Dataset sessions = generate_multi_tab(cfg, singles);
  for (const Trace& t : sessions.traces) {
    CHECK(t.label_count() == 1);
    // the session must equal some single-tab trace of the same class
    bool found = false;
    for (const Trace& s : singles.traces)
      if (s.labels == t.labels && s.directions == t.directions) found = true;
    CHECK(found);
  }
}

TEST_CASE("tab counts are roughly uniform on {1..max_tabs}") {
  SynthConfig cfg = small_config();
  cfg.max_tabs = 5;
  cfg.n_sessions = 10000;
  Dataset singles = generate_single_tab(cfg);
  Dataset sessions = generate_multi_tab(cfg, singles);
  std::array<int, 5> counts{};
  for (const Trace& t : sessions.traces) counts[t.label_count() - 1]++;
  // chi-squared against uniform, 4 dof, 0.999 quantile ~ 18.47
  const double expected = 10000.0 / 5.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 18.47);
}

TEST_CASE("raw baseline self-retrieval is perfect") {
  SynthConfig cfg = small_config();
  cfg.noise_rate = 0.3;  // make every trace distinct
  Dataset singles = generate_single_tab(cfg);
  EvalReport report = raw_feature_baseline(singles, singles, 1, 512, {1}, {1});
  CHECK(report.recall_at[0].second == doctest::Approx(1.0));
}

TEST_CASE("raw baseline on random labels is near chance") {
  SynthConfig cfg = small_config();
  cfg.n_classes = 10;
  cfg.traces_per_class = 20;
  cfg.noise_rate = 0.3;
  Dataset train = generate_single_tab(cfg);
  // scramble the labels so features carry no information
  std::mt19937_64 rng(7);
  Dataset scrambled = train;
  for (Trace& t : scrambled.traces) {
    t.labels.setZero();
    t.labels[static_cast<Index>(rng() % 10)] = 1;
  }
  cfg.seed = 321;
  Dataset test = generate_single_tab(cfg);
  Dataset test_scrambled = test;
  for (Trace& t : test_scrambled.traces) {
    t.labels.setZero();
    t.labels[static_cast<Index>(rng() % 10)] = 1;
  }
  EvalReport report =
      raw_feature_baseline(scrambled, test_scrambled, 5, 512, {5}, {1});
  // chance level for Recall@5 over 10 classes is 0.5; allow wide slack
  CHECK(report.recall_at[0].second > 0.2);
  CHECK(report.recall_at[0].second < 0.8);
}
