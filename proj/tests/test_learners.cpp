#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "cbvr/learners.hpp"

using namespace cbvr;

namespace {

struct Planted {
  FeatureMatrix train, test;
  std::vector<VideoId> pos, neg;
  std::set<VideoId> test_pos;
};

// One informative dimension (mean shift `shift` for positives) among `d`.
Planted planted(int d, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Planted p;
  auto build = [&](const std::string& prefix, int npos, int nneg, std::vector<VideoId>* pos,
                   std::vector<VideoId>* neg, std::set<VideoId>* pos_set) {
    std::vector<VideoId> ids;
    RowMatrixF v(npos + nneg, d);
    for (int i = 0; i < npos + nneg; ++i) {
      ids.emplace_back(prefix + std::to_string(1000 + i));
      for (int j = 0; j < d; ++j) v(i, j) = static_cast<float>(g(rng) + (j == 2 && i < npos ? shift : 0.0));
      if (i < npos) {
        if (pos) pos->push_back(ids.back());
        if (pos_set) pos_set->insert(ids.back());
      } else if (neg) {
        neg->push_back(ids.back());
      }
    }
    return FeatureMatrix("f", std::move(ids), std::move(v));
  };
  p.train = build("tr", 30, 120, &p.pos, &p.neg, nullptr);
  p.test = build("te", 20, 400, nullptr, nullptr, &p.test_pos);
  return p;
}

}  // namespace

TEST(Ridge, HugeLambdaShrinksToMean) {
  RowMatrixD x(4, 2);
  x << 1, 2, 3, 1, 0, 4, 2, 2;
  const std::vector<double> y{1, 2, 3, 6};
  const auto m = ridge_train(x, y, 1e12);
  EXPECT_LE(std::hypot(m.w[0], m.w[1]), 1e-6);
  EXPECT_NEAR(m.b, 3.0, 1e-6);
}

TEST(Ridge, ZeroLambdaMatchesExactSolve) {
  RowMatrixD x(3, 2);
  x << 1, 2, 3, 1, 0, 4;
  const std::vector<double> y{1, 2, 3};
  // Three centered points in two dimensions: only the primal system is regular.
  for (auto solver : {RidgeSolver::Primal, RidgeSolver::Auto}) {
    const auto m = ridge_train(x, y, 0.0, {}, solver);
    EXPECT_NEAR(m.w[0], 1.3333333333333333, 1e-9);
    EXPECT_NEAR(m.w[1], 1.6666666666666667, 1e-9);
    EXPECT_NEAR(m.b, -3.666666666666667, 1e-9);
  }
  EXPECT_THROW(ridge_train(x, y, 0.0, {}, RidgeSolver::Dual), DataError);
}

TEST(Ridge, OverdeterminedMatchesLeastSquares) {
  RowMatrixD x(5, 2);
  x << 1, 2, 3, 1, 0, 4, 2, 2, 5, -1;
  const std::vector<double> y{1, 2, 3, 0.5, -1};
  const auto m = ridge_train(x, y, 0.0);
  EXPECT_NEAR(m.w[0], 0.48076923076923184, 1e-9);
  EXPECT_NEAR(m.w[1], 1.1923076923076938, 1e-9);
  EXPECT_NEAR(m.b, -1.8653846153846194, 1e-9);
}

TEST(Ridge, SingularAtZeroLambdaSuggestsPositive) {
  RowMatrixD x(3, 2);
  x << 1, 2, 2, 4, 3, 6;
  const std::vector<double> y{1, 2, 3};
  try {
    ridge_train(x, y, 0.0, {}, RidgeSolver::Primal);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lambda > 0"), std::string::npos);
  }
}

TEST(Ridge, PrimalAndDualAgreeAndGradientVanishes) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (auto [n, d] : {std::pair{40, 6}, std::pair{6, 40}}) {
    RowMatrixD x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    std::vector<double> y(n), v(n);
    for (int i = 0; i < n; ++i) y[i] = g(rng), v[i] = 0.5 + (i % 3);
    const auto p = ridge_train(x, y, 0.7, v, RidgeSolver::Primal);
    const auto q = ridge_train(x, y, 0.7, v, RidgeSolver::Dual);
    for (int j = 0; j < d; ++j) EXPECT_NEAR(p.w[j], q.w[j], 1e-9);
    EXPECT_NEAR(p.b, q.b, 1e-9);
    EXPECT_LT(ridge_gradient_norm(x, y, 0.7, p, v), 1e-8);
    const auto path = RidgePath(x, y, v).solve(0.7);
    for (int j = 0; j < d; ++j) EXPECT_NEAR(path.w[j], p.w[j], 1e-9);
  }
}

TEST(Krr, IdentityKernelHalvesLabels) {
  const std::vector<double> y{1, -1, 2};
  const auto m = krr_train(Eigen::MatrixXd::Identity(3, 3), y, 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(m.alpha[i], y[i] / 2, 1e-15);
}

TEST(Krr, HugeLambdaDominates) {
  Eigen::MatrixXd k(2, 2);
  k << 2, 1, 1, 2;
  const std::vector<double> y{1, -3};
  const auto m = krr_train(k, y, 1e12);
  EXPECT_LE(m.alpha.norm(), 2.0 * std::hypot(1.0, 3.0) / 1e12);
}

TEST(Krr, AsymmetricKernelThrows) {
  Eigen::MatrixXd k(2, 2);
  k << 1, 0.5, 0, 1;
  EXPECT_THROW(krr_train(k, std::vector<double>{1, 1}, 1.0), DataError);
}

TEST(Svm, SeparableToyIsFit) {
  RowMatrixD x(6, 2);
  x << 2, 2, 3, 1, 2.5, 3, -2, -1, -3, -2, -1, -2.5;
  const std::vector<double> y{1, 1, 1, -1, -1, -1};
  const auto r = svm_train_sgd(x, y, 1e-2, 50, 3);
  for (int i = 0; i < 6; ++i) {
    const double s = r.model.w[0] * x(i, 0) + r.model.w[1] * x(i, 1) + r.model.b;
    EXPECT_GT(s * y[i], 0.0) << i;
  }
  EXPECT_NEAR(r.objective.back(), svm_objective(x, y, 1e-2, r.model), 1e-12);
}

TEST(Svm, SingleClassThrows) {
  EXPECT_THROW(svm_train_sgd(RowMatrixD::Ones(2, 2), std::vector<double>{1, 1}, 0.1, 2, 0), DataError);
}

TEST(Predict, UnitWeightPicksColumn) {
  RowMatrixF v(3, 3);
  v << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const FeatureMatrix fm("f", {VideoId("a"), VideoId("b"), VideoId("c")}, v);
  LinearModel m;
  m.w = {0, 1, 0};
  m.b = 0.5;
  const auto s = predict_scores(m, fm);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s.entries()[i].score, v(i, 1) + 0.5);
  m.w = {1, 0};
  EXPECT_THROW(predict_scores(m, fm), DataError);
}

TEST(TrainSpec, Ex010RequiresKrr) {
  TrainSpec spec;
  spec.event_id = "E1";
  spec.positives = {VideoId("p")};
  spec.negatives = {VideoId("n")};
  spec.scenario = Scenario::Ex010;
  spec.classifier = ClassifierChoice::Both;
  try {
    spec.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_STREQ(e.what(), "010Ex requires krr");
  }
  spec.classifier = ClassifierChoice::Krr;
  EXPECT_NO_THROW(spec.validate());
}

TEST(TrainSpec, OverlapRejected) {
  TrainSpec spec;
  spec.event_id = "E1";
  spec.positives = {VideoId("p")};
  spec.negatives = {VideoId("p")};
  EXPECT_THROW(spec.validate(), DataError);
}

TEST(Folds, StratifiedAndOrderFree) {
  std::vector<std::uint8_t> labels(50, 0);
  for (int i = 0; i < 10; ++i) labels[i * 5] = 1;
  const auto f = assign_folds(labels, 5, 7);
  EXPECT_EQ(f, assign_folds(labels, 5, 7));
  std::array<int, 5> pos{}, all{};
  for (std::size_t i = 0; i < labels.size(); ++i) pos[f[i]] += labels[i], ++all[f[i]];
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(pos[k], 2);
    EXPECT_EQ(all[k], 10);
  }
}

TEST(CrossValidation, HeldOutRowDoesNotInfluenceItsScore) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  RowMatrixD x(20, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  std::vector<double> y(20);
  for (auto& v : y) v = g(rng);
  std::vector<int> fold(20);
  for (int i = 0; i < 20; ++i) fold[i] = i % 4;
  const auto base = cross_validated_scores(x, y, fold, 0.5);
  auto y2 = y;
  y2[3] += 100.0;  // row 3 is in fold 3
  const auto moved = cross_validated_scores(x, y2, fold, 0.5);
  EXPECT_DOUBLE_EQ(moved[3], base[3]);
  EXPECT_NE(moved[0], base[0]);
}

TEST(TrainEvent, PlantedFeatureReachesHighAp) {
  const auto p = planted(8, 4.0, 5);
  TrainSpec spec{"E1", p.pos, p.neg, Scenario::Ex100, ClassifierChoice::Both};
  const std::vector<FeatureMatrix> feats{p.train};
  const auto t = train_event(feats, spec);
  ASSERT_EQ(t.runs.size(), 2u);
  EXPECT_EQ(t.runs[0].name, "f:krr");
  EXPECT_EQ(t.runs[1].name, "f:svm");
  for (const auto& r : t.runs) {
    const double ap = average_precision(to_ranked_list(predict_scores(r.model, p.test)), p.test_pos);
    EXPECT_GE(ap, 0.9) << r.name;
  }
}

TEST(TrainEvent, RowOrderInvariant) {
  const auto p = planted(5, 2.0, 6);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(p.train.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  std::vector<VideoId> ids;
  RowMatrixF v(p.train.size(), p.train.dim());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    ids.push_back(p.train.ids()[perm[i]]);
    v.row(static_cast<Eigen::Index>(i)) = p.train.values().row(perm[i]);
  }
  const std::vector<FeatureMatrix> a{p.train}, b{FeatureMatrix("f", ids, v)};
  auto pos = p.pos, neg = p.neg;
  std::reverse(pos.begin(), pos.end());
  std::reverse(neg.begin(), neg.end());
  const auto ta = train_event(a, {"E1", p.pos, p.neg, Scenario::Ex100, ClassifierChoice::Krr});
  const auto tb = train_event(b, {"E1", pos, neg, Scenario::Ex100, ClassifierChoice::Krr});
  EXPECT_EQ(ta.runs[0].model.w, tb.runs[0].model.w);
  EXPECT_EQ(ta.runs[0].model.b, tb.runs[0].model.b);
  EXPECT_EQ(ta.runs[0].heldout, tb.runs[0].heldout);
}

TEST(TrainEvent, FewPositivesReduceFolds) {
  auto p = planted(4, 2.0, 7);
  p.pos.resize(3);
  const std::vector<FeatureMatrix> feats{p.train};
  const auto old = set_warning_sink([](std::string_view) {});
  const auto t = train_event(feats, {"E1", p.pos, p.neg, Scenario::Ex100, ClassifierChoice::Krr});
  set_warning_sink(old);
  EXPECT_EQ(t.folds_used, 3);
}

TEST(ModelsFile, RoundTrip) {
  LinearModel m;
  m.event_id = "E1";
  m.feature_name = "f01";
  m.w = {0.5, -0.25, 3.0};
  m.b = 0.125;
  m.lambda = 10.0;
  const std::vector<LinearModel> ms{m};
  const auto text = format_models_jsonl(ms);
  const auto back = parse_models_jsonl(text);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].w, m.w);
  EXPECT_EQ(back[0].b, m.b);
  EXPECT_EQ(format_models_jsonl(back), text);
  EXPECT_THROW(parse_models_jsonl("{not json"), DataError);
}
