#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "oscar/identify.hpp"

using namespace oscar;

namespace {

Mat random_rows(std::mt19937_64& rng, Index n, Index dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat m(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) m(i, j) = gauss(rng);
  return m;
}

IdentificationIndex random_index(std::mt19937_64& rng, Index w, Index n,
                                 Index dim, Index b) {
  IdentificationIndex index;
  index.proxies = random_rows(rng, w, dim);
  index.references = random_rows(rng, n, dim);
  index.reference_labels = Eigen::MatrixXi::Zero(n, w);
  for (Index i = 0; i < n; ++i) {
    index.reference_labels(i, static_cast<Index>(rng() % w)) = 1;
    if (rng() % 2) index.reference_labels(i, static_cast<Index>(rng() % w)) = 1;
  }
  index.neighbors = b;
  return index;
}

// Brute-force oracle: retrieve by full sort, score by reciprocal distance.
ScoreVector oracle_proxy_scores(const Vec& target, const IdentificationIndex& index) {
  std::vector<std::pair<double, Index>> d;
  for (Index j = 0; j < index.num_classes(); ++j)
    d.push_back({cosine_distance(target, index.proxies.row(j).transpose()), j});
  std::stable_sort(d.begin(), d.end(),
                   [](auto& a, auto& b) { return a.first < b.first; });
  ScoreVector s = ScoreVector::Zero(index.num_classes());
  for (Index r = 0; r < index.neighbors; ++r)
    s[d[static_cast<size_t>(r)].second] =
        1.0 / std::max(d[static_cast<size_t>(r)].first, kDistanceFloor);
  return s;
}

ScoreVector oracle_sample_scores(const Vec& target, const IdentificationIndex& index) {
  std::vector<std::pair<double, Index>> d;
  for (Index i = 0; i < index.num_references(); ++i)
    d.push_back({cosine_distance(target, index.references.row(i).transpose()), i});
  std::stable_sort(d.begin(), d.end(),
                   [](auto& a, auto& b) { return a.first < b.first; });
  ScoreVector s = ScoreVector::Zero(index.num_classes());
  for (Index r = 0; r < index.neighbors; ++r) {
    const Index i = d[static_cast<size_t>(r)].second;
    for (Index j = 0; j < index.num_classes(); ++j)
      if (index.reference_labels(i, j))
        s[j] += 1.0 / std::max(d[static_cast<size_t>(r)].first, kDistanceFloor);
  }
  return s;
}

}  // namespace

TEST_CASE("proxy_scores reciprocal arithmetic") {
  IdentificationIndex index;
  index.proxies = Mat(3, 2);
  // distances 0.5, 1.0, 2.0 from target [1,0]
  index.proxies << 0.5, std::sqrt(0.75),   // cos 0.5 -> dis 0.5
                   0.0, 1.0,               // cos 0   -> dis 1.0
                   -1.0, 0.0;              // cos -1  -> dis 2.0
  index.references = Mat::Ones(1, 2);
  index.reference_labels = Eigen::MatrixXi::Ones(1, 3);
  index.neighbors = 2;
  Vec target(2);
  target << 1, 0;
  ScoreVector s = proxy_scores(target, index);
  CHECK(s[0] == doctest::Approx(2.0));
  CHECK(s[1] == doctest::Approx(1.0));
  CHECK(s[2] == 0.0);

  SUBCASE("b == W retrieves every class") {
    index.neighbors = 3;
    ScoreVector all = proxy_scores(target, index);
    CHECK((all.array() > 0.0).all());
  }
  SUBCASE("exact match is floored, not infinite") {
    index.neighbors = 1;
    Vec exact = index.proxies.row(0);
    ScoreVector s1 = proxy_scores(exact, index);
    CHECK(s1[0] == doctest::Approx(1.0 / kDistanceFloor));
  }
}

TEST_CASE("sample_scores accumulates per retrieved sample") {
  IdentificationIndex index;
  index.proxies = Mat::Identity(3, 3);
  index.references = Mat(2, 3);
  index.references << 0.5, std::sqrt(0.75), 0,   // dis 0.5 from e0
                      0.0, 1.0, 0.0;             // dis 1.0 from e0
  index.reference_labels = Eigen::MatrixXi::Zero(2, 3);
  index.reference_labels(0, 0) = 1;  // {A,B} at 0.5
  index.reference_labels(0, 1) = 1;
  index.reference_labels(1, 0) = 1;  // {A} at 1.0
  Vec target(3);
  target << 1, 0, 0;

  SUBCASE("one retrieved multi-label sample") {
    index.neighbors = 1;
    ScoreVector s = sample_scores(target, index);
    CHECK(s[0] == doctest::Approx(2.0));
    CHECK(s[1] == doctest::Approx(2.0));
    CHECK(s[2] == 0.0);
  }
  SUBCASE("scores sum over retrieved samples") {
    index.neighbors = 2;
    ScoreVector s = sample_scores(target, index);
    CHECK(s[0] == doctest::Approx(3.0));  // 2.0 + 1.0
  }
}

TEST_CASE("scores match the exhaustive oracle on random instances") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const Index w = 2 + static_cast<Index>(rng() % 49);
    const Index n = 2 + static_cast<Index>(rng() % 499);
    const Index dim = 4 + static_cast<Index>(rng() % 12);
    const Index b = 1 + static_cast<Index>(rng() % std::min(w, n));
    IdentificationIndex index = random_index(rng, w, n, dim, b);
    Vec target = random_rows(rng, 1, dim).row(0);
    REQUIRE(proxy_scores(target, index) == oracle_proxy_scores(target, index));
    REQUIRE(sample_scores(target, index) == oracle_sample_scores(target, index));
  }
}

TEST_CASE("increasing b never decreases a score") {
  std::mt19937_64 rng(67);
  IdentificationIndex index = random_index(rng, 10, 50, 6, 1);
  Vec target = random_rows(rng, 1, 6).row(0);
  ScoreVector prev_p = ScoreVector::Zero(10), prev_s = ScoreVector::Zero(10);
  for (Index b = 1; b <= 10; ++b) {
    index.neighbors = b;
    ScoreVector p = proxy_scores(target, index);
    ScoreVector s = sample_scores(target, index);
    CHECK(((p - prev_p).array() >= -1e-15).all());
    CHECK(((s - prev_s).array() >= -1e-15).all());
    prev_p = p;
    prev_s = s;
  }
}

TEST_CASE("combine_and_decide weighting, normalization and ranking") {
  IdentificationIndex index;
  index.proxies = Mat::Identity(3, 3);
  index.references = Mat::Identity(3, 3);
  index.reference_labels = Eigen::MatrixXi::Identity(3, 3);
  index.neighbors = 3;
  index.score_weight = 2.0;
  index.threshold = 0.3;

  Vec target(3);
  target << 1.0, 0.4, 0.1;
  Decision d = combine_and_decide(target, index);
  ScoreVector expected = proxy_scores(target, index) +
                         2.0 * sample_scores(target, index);
  CHECK(d.scores == expected);
  CHECK(d.ranking[0] == 0);

  SUBCASE("theta=0 ranks by proxy scores alone") {
    index.score_weight = 0.0;
    Decision d0 = combine_and_decide(target, index);
    CHECK(d0.scores == proxy_scores(target, index));
  }
  SUBCASE("theta=0, b=1 predicts exactly the nearest proxy's class") {
    index.score_weight = 0.0;
    index.neighbors = 1;
    Decision d1 = combine_and_decide(target, index);
    REQUIRE(d1.predicted.size() == 1);
    CHECK(d1.predicted[0] == 0);
  }
}

TEST_CASE("threshold applies to max-normalized scores") {
  // proxy scores {A:5, B:2.5, C:1, D:1}, tau = 0.3 -> predicted {A, B}
  IdentificationIndex index;
  index.proxies = Mat::Identity(4, 4);
  index.references = Mat::Identity(4, 4);
  index.reference_labels = Eigen::MatrixXi::Identity(4, 4);
  index.neighbors = 4;
  index.score_weight = 0.0;
  index.threshold = 0.3;

  // unit target with cos sims 0.8, 0.6, 0, 0 to the axes gives reciprocal
  // distances 5, 2.5, 1, 1
  Vec target(4);
  target << 0.8, 0.6, 0.0, 0.0;
  Decision d = combine_and_decide(target, index);
  CHECK(d.scores[0] == doctest::Approx(5.0));
  CHECK(d.scores[1] == doctest::Approx(2.5));
  CHECK(d.scores[2] == doctest::Approx(1.0));
  // normalized scores: 1.0, 0.5, 0.2, 0.2
  REQUIRE(d.predicted.size() == 2);
  CHECK(d.predicted[0] == 0);
  CHECK(d.predicted[1] == 1);
}

TEST_CASE("ranking is invariant under positive rescaling") {
  std::mt19937_64 rng(71);
  IdentificationIndex index = random_index(rng, 8, 40, 5, 4);
  Vec target = random_rows(rng, 1, 5).row(0);
  Decision base = combine_and_decide(target, index);

  IdentificationIndex scaled = index;
  scaled.references *= 3.7;
  Decision d = combine_and_decide((2.5 * target).eval(), scaled);
  CHECK(d.ranking == base.ranking);
}

TEST_CASE("index snapshot round-trip") {
  std::mt19937_64 rng(73);
  IdentificationIndex index = random_index(rng, 5, 20, 4, 3);
  index.score_weight = 2.0;
  index.threshold = 0.3;
  auto path = std::filesystem::temp_directory_path() / "oscar_index.bin";
  save_index(index, path, R"({"b":3})");
  std::string echo;
  IdentificationIndex back = load_index(path, &echo);
  CHECK(echo == R"({"b":3})");
  CHECK(back.proxies == index.proxies);
  CHECK(back.references == index.references);
  CHECK(back.reference_labels == index.reference_labels);
  CHECK(back.neighbors == index.neighbors);
  CHECK(back.score_weight == index.score_weight);
  CHECK(back.threshold == index.threshold);
}
