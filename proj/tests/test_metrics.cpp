#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "oscar/metrics.hpp"

using namespace oscar;

namespace {

LabelVec truth_of(std::vector<int> idx, int w) {
  LabelVec y = LabelVec::Zero(w);
  for (int j : idx) y[j] = 1;
  return y;
}

// Set-enumeration oracle: materialize the top-k set and count by hand.
double oracle_recall(const LabelVec& y, const std::vector<Index>& ranking, Index k) {
  std::set<Index> topk(ranking.begin(),
                       ranking.begin() + std::min<size_t>(ranking.size(),
                                                          static_cast<size_t>(k)));
  int hits = 0;
  for (Index j = 0; j < y.size(); ++j)
    if (y[j] && topk.count(j)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y.sum());
}

double oracle_precision(const LabelVec& y, const std::vector<Index>& ranking,
                        Index t) {
  std::set<Index> topt(ranking.begin(),
                       ranking.begin() + std::min<size_t>(ranking.size(),
                                                          static_cast<size_t>(t)));
  int hits = 0;
  for (Index j = 0; j < y.size(); ++j)
    if (y[j] && topt.count(j)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(t);
}

double oracle_ap(const LabelVec& y, const std::vector<Index>& ranking, Index k) {
  double sum = 0.0;
  for (Index t = 1; t <= k; ++t) sum += oracle_precision(y, ranking, t);
  return sum / static_cast<double>(std::min<Index>(k, y.sum()));
}

}  // namespace

TEST_CASE("recall_at_k direct cases") {
  std::vector<Index> ranking = {0, 2, 4, 6, 8, 1, 3};
  CHECK(recall_at_k(truth_of({0, 1}, 10), ranking, 5) == doctest::Approx(0.5));
  CHECK(recall_at_k(truth_of({0, 2}, 10), ranking, 5) == doctest::Approx(1.0));
  CHECK(recall_at_k(truth_of({1}, 10), ranking, 5) == doctest::Approx(0.0));
  CHECK_THROWS(recall_at_k(LabelVec::Zero(10), ranking, 5));
}

TEST_CASE("precision_at_t direct cases") {
  std::vector<Index> ranking = {0, 1, 2};
  CHECK(precision_at_t(truth_of({0}, 5), ranking, 1) == doctest::Approx(1.0));
  CHECK(precision_at_t(truth_of({1}, 5), ranking, 2) == doctest::Approx(0.5));
  CHECK(precision_at_t(truth_of({0, 1}, 5), ranking, 2) == doctest::Approx(1.0));
}

TEST_CASE("ap_at_k worked examples") {
  std::vector<Index> ranking = {3, 0, 1, 2};
  CHECK(ap_at_k(truth_of({3}, 5), ranking, 1) == doctest::Approx(1.0));
  // truth {A} ranked second: (0 + 0.5) / min(2,1) = 0.5
  CHECK(ap_at_k(truth_of({0}, 5), ranking, 2) == doctest::Approx(0.5));
  // truth {A,B} ranked first and second: (1 + 1) / 2 = 1.0
  CHECK(ap_at_k(truth_of({3, 0}, 5), ranking, 2) == doctest::Approx(1.0));
}

TEST_CASE("ap_at_1 equals precision_at_1 for single-label truths") {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 3 + static_cast<int>(rng() % 20);
    std::vector<Index> ranking(static_cast<size_t>(w));
    std::iota(ranking.begin(), ranking.end(), Index{0});
    std::shuffle(ranking.begin(), ranking.end(), rng);
    LabelVec y = truth_of({static_cast<int>(rng() % w)}, w);
    CHECK(ap_at_k(y, ranking, 1) == precision_at_t(y, ranking, 1));
  }
}

TEST_CASE("metrics match the set-enumeration oracle on random pairs") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 1000; ++trial) {
    const int w = 2 + static_cast<int>(rng() % 30);
    std::vector<Index> ranking(static_cast<size_t>(w));
    std::iota(ranking.begin(), ranking.end(), Index{0});
    std::shuffle(ranking.begin(), ranking.end(), rng);
    LabelVec y = LabelVec::Zero(w);
    const int n_labels = 1 + static_cast<int>(rng() % std::min(5, w));
    for (int c = 0; c < n_labels; ++c) y[static_cast<Index>(rng() % w)] = 1;
    const Index k = 1 + static_cast<Index>(rng() % w);

    REQUIRE(recall_at_k(y, ranking, k) == oracle_recall(y, ranking, k));
    REQUIRE(precision_at_t(y, ranking, k) == oracle_precision(y, ranking, k));
    REQUIRE(ap_at_k(y, ranking, k) == oracle_ap(y, ranking, k));
    // recall non-decreasing in k
    if (k < w) CHECK(recall_at_k(y, ranking, k + 1) >= recall_at_k(y, ranking, k));
  }
}

TEST_CASE("evaluate averages per-sample metrics over samples") {
  // index where each sample's own class is nearest: identity geometry
  IdentificationIndex index;
  index.proxies = Mat::Identity(4, 4);
  index.references = Mat::Identity(4, 4);
  index.reference_labels = Eigen::MatrixXi::Identity(4, 4);
  index.neighbors = 4;
  index.score_weight = 2.0;

  std::vector<EmbeddedSample> test;
  for (int j = 0; j < 4; ++j) {
    EmbeddedSample s;
    s.embedding = Mat::Identity(4, 4).row(j);
    s.labels = truth_of({j}, 4);
    test.push_back(s);
  }
  EvalReport report = evaluate(index, test, {1, 2}, {1}, Protocol::closed);
  CHECK(report.sample_count == 4);
  for (const auto& [k, v] : report.recall_at) CHECK(v == doctest::Approx(1.0));
  CHECK(report.ap_at[0].second == doctest::Approx(1.0));

  SUBCASE("catalog mismatch is an error") {
    test[0].labels = truth_of({0}, 5);
    CHECK_THROWS_AS(evaluate(index, test, {1}, {1}, Protocol::closed), DataError);
  }
}

TEST_CASE("random ranking over many classes scores near chance") {
  // single-label samples, random rankings over W=1000: E[Recall@5] = 5/W
  std::mt19937_64 rng(89);
  const int w = 1000, n = 4000;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<Index> ranking(w);
    std::iota(ranking.begin(), ranking.end(), Index{0});
    std::shuffle(ranking.begin(), ranking.end(), rng);
    LabelVec y = truth_of({static_cast<int>(rng() % w)}, w);
    total += recall_at_k(y, ranking, 5);
  }
  const double mean = total / n;
  const double p = 5.0 / w;
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(mean - p) < 3 * sigma);
}
