#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cbvr/reranking.hpp"

using namespace cbvr;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Minimizes v * loss + f(v) over [0, 1] by golden-section search.
double golden_min_weight(double loss, double l1, double l2) {
  auto obj = [&](double v) { return v * loss + spar_regularizer(v, l1, l2, SpScheme::Mixture); };
  double a = 0.0, b = 1.0;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int i = 0; i < 200; ++i) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    (obj(c) < obj(d) ? b : a) = obj(c) < obj(d) ? d : c;
  }
  return 0.5 * (a + b);
}

struct Collection {
  RankedList initial;
  std::vector<FeatureMatrix> features;
};

Collection collection(std::uint64_t seed, int n = 80) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<VideoId> ids;
  RowMatrixF v(n, 4);
  std::vector<ScoreEntry> scores;
  for (int i = 0; i < n; ++i) {
    ids.emplace_back("v" + std::to_string(100 + i));
    const bool rel = i % 8 == 0;
    for (int j = 0; j < 4; ++j) v(i, j) = static_cast<float>(g(rng) + (rel && j == 0 ? 2.0 : 0.0));
    scores.push_back({ids.back(), (rel ? 1.0 : 0.0) + g(rng)});
  }
  return {to_ranked_list(ScoreList("E1", "init", std::move(scores))), {FeatureMatrix("f", ids, v)}};
}

std::vector<std::string> order(const RankedList& r) {
  std::vector<std::string> out;
  for (const auto& e : r.entries()) out.push_back(e.id.str());
  return out;
}

}  // namespace

TEST(Mmprf, TopOneIsOnlyPositiveAndSetsAreDisjoint) {
  const auto c = collection(1);
  const auto p = mmprf_init(c.initial, 1, 20, 5);
  ASSERT_EQ(p.positives.size(), 1u);
  EXPECT_EQ(p.positives[0], c.initial.entries()[0].id);
  EXPECT_EQ(p.negatives.size(), 20u);
  std::set<VideoId> bottom;
  for (std::size_t r = c.initial.size() / 2; r < c.initial.size(); ++r) bottom.insert(c.initial.entries()[r].id);
  std::set<VideoId> seen;
  for (const auto& id : p.negatives) {
    EXPECT_TRUE(bottom.count(id)) << id.str();
    EXPECT_TRUE(seen.insert(id).second);
  }
  EXPECT_EQ(mmprf_init(c.initial, 1, 20, 5).negatives, p.negatives);
}

TEST(Mmprf, TooSmallCollectionThrows) {
  const auto c = collection(1, 10);
  EXPECT_THROW(mmprf_init(c.initial, 5, 20, 0), DataError);
}

TEST(SparWeights, BinaryInfiniteThresholdKeepsEverything) {
  const std::vector<double> loss{0.0, 3.0, 1e9};
  for (double v : spar_weights(loss, kInf, 0.0, SpScheme::Binary)) EXPECT_EQ(v, 1.0);
}

TEST(SparWeights, BinaryThreshold) {
  const std::vector<double> loss{0.2, 0.5, 0.9};
  EXPECT_EQ(spar_weights(loss, 0.5, 0.0, SpScheme::Binary), (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(SparWeights, MixtureClosedForm) {
  const std::vector<double> loss{0.75};
  EXPECT_NEAR(spar_weights(loss, 1.0, 0.5, SpScheme::Mixture)[0], 0.333333333333333, 1e-12);
}

TEST(SparWeights, MixtureEndpointsAreExact) {
  const std::vector<double> loss{0.5, 1.0};
  const auto v = spar_weights(loss, 1.0, 0.5, SpScheme::Mixture);
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[1], 0.0);
}

TEST(SparWeights, MixtureMatchesNumericalMinimization) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double l1 = 0.1 + 3.0 * u(rng);
    const double l2 = l1 * (0.05 + 0.9 * u(rng));
    const double loss = 1.2 * l1 * u(rng);
    const double v = spar_weights(std::vector<double>{loss}, l1, l2, SpScheme::Mixture)[0];
    EXPECT_NEAR(v, golden_min_weight(loss, l1, l2), 1e-6) << loss << " " << l1 << " " << l2;
  }
}

TEST(SparWeights, MixtureIsMonotoneDecreasing) {
  std::vector<double> loss;
  for (int i = 0; i <= 100; ++i) loss.push_back(i * 0.02);
  const auto v = spar_weights(loss, 1.5, 0.4, SpScheme::Mixture);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_LE(v[i], v[i - 1]);
}

TEST(SparWeights, BadLambdasThrow) {
  const std::vector<double> loss{0.1};
  EXPECT_THROW(spar_weights(loss, 0.5, 0.5, SpScheme::Mixture), ConfigError);
  EXPECT_THROW(spar_weights(loss, 0.5, 0.9, SpScheme::Mixture), ConfigError);
}

TEST(PrfConfig, IterationCapIsTwo) {
  PrfConfig c;
  c.iterations = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c.iterations = 2;
  EXPECT_NO_THROW(c.validate());
}

TEST(SparRerank, InfiniteBinaryReducesToPrf) {
  const auto c = collection(2);
  PrfConfig cfg;
  cfg.k_pos = 5;
  cfg.k_neg = 20;
  cfg.iterations = 1;
  cfg.scheme = SpScheme::Binary;
  cfg.lambdas = {{kInf, 0.0}};
  cfg.blend = false;
  const auto r = spar_rerank(c.initial, c.features, cfg, 9);
  const auto p = prf_rerank(c.initial, c.features, 5, 20, cfg.ridge_lambda, 9);
  ASSERT_EQ(r.ranking.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(r.ranking.entries()[i].id, p.entries()[i].id);
    EXPECT_NEAR(r.ranking.entries()[i].score, p.entries()[i].score, 1e-9);
  }
  for (double w : r.trace[0].weights) EXPECT_EQ(w, 1.0);
}

TEST(SparRerank, ObjectiveNeverIncreasesWithinIteration) {
  const auto c = collection(3, 200);
  PrfConfig cfg;
  cfg.k_pos = 10;
  cfg.k_neg = 50;
  cfg.inner_rounds = 4;
  const auto r = spar_rerank(c.initial, c.features, cfg, 1);
  ASSERT_EQ(r.trace.size(), 2u);
  for (const auto& it : r.trace)
    for (std::size_t i = 1; i < it.objective.size(); ++i)
      EXPECT_LE(it.objective[i], it.objective[i - 1] * (1.0 + 1e-9) + 1e-12) << it.iteration << ":" << i;
}

TEST(SparRerank, DeterministicAndWeightsInUnitInterval) {
  const auto c = collection(4, 200);
  const PrfConfig cfg;
  const auto a = spar_rerank(c.initial, c.features, cfg, 3);
  const auto b = spar_rerank(c.initial, c.features, cfg, 3);
  EXPECT_EQ(order(a.ranking), order(b.ranking));
  for (std::size_t i = 0; i < a.ranking.size(); ++i)
    EXPECT_EQ(a.ranking.entries()[i].score, b.ranking.entries()[i].score);
  for (const auto& it : a.trace)
    for (double w : it.weights) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
}

TEST(Blend, IdenticalInputsGiveSameOrder) {
  const auto c = collection(5);
  EXPECT_EQ(order(blend_final(c.initial, c.initial)), order(c.initial));
}

TEST(Blend, SymmetricInArguments) {
  const auto c = collection(6);
  const auto other = prf_rerank(c.initial, c.features, 5, 20, 1.0, 2);
  const auto ab = blend_final(c.initial, other), ba = blend_final(other, c.initial);
  EXPECT_EQ(order(ab), order(ba));
}

TEST(Blend, CollectionMismatchThrows) {
  const auto a = collection(7, 40), b = collection(7, 41);
  EXPECT_THROW(blend_final(a.initial, b.initial), DataError);
}

TEST(Trace, JsonLinesOnePerIteration) {
  const auto c = collection(8, 200);
  const auto r = spar_rerank(c.initial, c.features, PrfConfig{}, 0);
  const auto text = rerank_trace_jsonl("E1", r.trace);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find("positive_lambda1"), std::string::npos);
}
