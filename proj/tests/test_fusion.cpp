#include <gtest/gtest.h>

#include <random>

#include "cbvr/fusion.hpp"

using namespace cbvr;

namespace {

ScoreMatrix matrix(const RowMatrixD& s, std::vector<std::uint8_t> labels = {}) {
  ScoreMatrix m;
  m.event_id = "E1";
  for (Eigen::Index r = 0; r < s.rows(); ++r) m.names.push_back("s" + std::to_string(r));
  for (Eigen::Index c = 0; c < s.cols(); ++c) m.videos.emplace_back("v" + std::to_string(100 + c));
  m.scores = s;
  m.labels = std::move(labels);
  return m;
}

std::vector<std::string> order(const RankedList& r) {
  std::vector<std::string> out;
  for (const auto& e : r.entries()) out.push_back(e.id.str());
  return out;
}

double pearson(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const Eigen::RowVectorXd x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / (x.norm() * y.norm());
}

void quiet(std::string_view) {}

}  // namespace

TEST(ScoreMatrix, FromListsAlignsColumns) {
  std::vector<ScoreList> lists;
  lists.emplace_back("E1", "a", std::vector<ScoreEntry>{{VideoId("y"), 1.0}, {VideoId("x"), 2.0}});
  lists.emplace_back("E1", "b", std::vector<ScoreEntry>{{VideoId("x"), 5.0}, {VideoId("y"), 6.0}});
  const std::set<VideoId> pos{VideoId("y")};
  const auto m = ScoreMatrix::from_lists(lists, &pos);
  EXPECT_EQ(m.videos.front().str(), "x");
  EXPECT_EQ(m.scores(0, 0), 2.0);
  EXPECT_EQ(m.scores(1, 1), 6.0);
  EXPECT_EQ(m.labels, (std::vector<std::uint8_t>{0, 1}));
  lists.emplace_back("E1", "c", std::vector<ScoreEntry>{{VideoId("x"), 1.0}});
  EXPECT_THROW(ScoreMatrix::from_lists(lists), DataError);
}

TEST(RankAugment, DoublesRows) {
  RowMatrixD s(1, 3);
  s << 0.2, 0.9, 0.5;
  const auto a = rank_augment(matrix(s));
  ASSERT_EQ(a.rows(), 2);
  EXPECT_EQ(a.names[1], "s0:rank");
  EXPECT_DOUBLE_EQ(a.scores(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(a.scores(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(a.scores(1, 0), 0.0);
}

TEST(PcaTree, IdenticalRowsCollapseToOne) {
  RowMatrixD s(6, 5);
  for (int r = 0; r < 6; ++r) s.row(r) << 1, 4, 2, 8, 5;
  const auto e = pca_tree_cluster(matrix(s), 2, 6);
  ASSERT_EQ(e.matrix.rows(), 1);
  EXPECT_EQ(e.matrix.scores.row(0), s.row(0));
}

TEST(PcaTree, LargeLeafGivesMeanRow) {
  RowMatrixD s(3, 2);
  s << 1, 2, 3, 4, 5, 0;
  const auto e = pca_tree_cluster(matrix(s), 3, 6);
  ASSERT_EQ(e.matrix.rows(), 1);
  EXPECT_DOUBLE_EQ(e.matrix.scores(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(e.matrix.scores(0, 1), 2.0);
}

TEST(PcaTree, SingleRowIsItself) {
  RowMatrixD s(1, 3);
  s << 1, -1, 0.5;
  EXPECT_EQ(pca_tree_cluster(matrix(s), 1, 6).matrix.scores, s);
}

TEST(PcaTree, RecoversTwoOrthogonalSignals) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  const int n = 300;
  Eigen::RowVectorXd a(n), b(n);
  for (int i = 0; i < n; ++i) a[i] = g(rng), b[i] = g(rng);
  b -= (b.dot(a) / a.squaredNorm()) * a;  // exactly orthogonal
  RowMatrixD s(10, n);
  for (int r = 0; r < 10; ++r)
    for (int i = 0; i < n; ++i) s(r, i) = (r < 5 ? a[i] : b[i]) + 0.2 * g(rng);
  const auto e = pca_tree_cluster(matrix(s), 5, 6);
  ASSERT_EQ(e.matrix.rows(), 2);
  for (int k = 0; k < 2; ++k) {
    const double ca = std::abs(pearson(e.matrix.scores.row(k), a));
    const double cb = std::abs(pearson(e.matrix.scores.row(k), b));
    EXPECT_GT(std::max(ca, cb), 0.95);
  }
}

TEST(Strategies, AverageOnTwoRows) {
  RowMatrixD s(2, 4);
  s << 1, 2, 3, 4, 4, 3, 2, 1;
  const auto w = strategy_weights(matrix(s, {0, 0, 0, 1}), Strategy::Average);
  EXPECT_EQ(w.weights, (std::vector<double>{0.5, 0.5}));
}

TEST(Strategies, SingleApIsProportionalToAp) {
  RowMatrixD s(2, 4);
  s << 1, 2, 3, 4, 4, 3, 2, 1;
  // AP row0 = 1, row1 = 1/4
  const auto w = strategy_weights(matrix(s, {0, 0, 0, 1}), Strategy::SingleAp);
  EXPECT_NEAR(w.weights[0], 0.8, 1e-12);
  EXPECT_NEAR(w.weights[1], 0.2, 1e-12);
}

TEST(Strategies, AllZeroFallsBackToUniform) {
  RowMatrixD s(2, 4);
  s << 1, 2, 3, 4, 1, 2, 3, 4;  // identical rows: leave-one-out gain is zero
  const auto old = set_warning_sink(quiet);
  const auto w = strategy_weights(matrix(s, {0, 0, 0, 1}), Strategy::Loo);
  set_warning_sink(old);
  EXPECT_EQ(w.weights, (std::vector<double>{0.5, 0.5}));
}

TEST(Strategies, WeightsOnSimplex) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  RowMatrixD s(5, 80);
  std::vector<std::uint8_t> lab(80);
  for (int c = 0; c < 80; ++c) {
    lab[c] = c % 8 == 0;
    for (int r = 0; r < 5; ++r) s(r, c) = g(rng) + (lab[c] ? 0.5 * r : 0.0);
  }
  for (auto st : {Strategy::Average, Strategy::SingleAp, Strategy::Loo, Strategy::SgdAp}) {
    const auto w = strategy_weights(matrix(s, lab), st, 4);
    double sum = 0.0;
    for (double v : w.weights) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12) << to_string(st);
  }
}

TEST(Strategies, NoPositivesThrows) {
  EXPECT_THROW(strategy_weights(matrix(RowMatrixD::Ones(2, 3), {0, 0, 0}), Strategy::Average), DataError);
}

TEST(Mhlf, SingleSourceKeepsRanking) {
  RowMatrixD tr(1, 5), te(1, 4);
  tr << 0.1, 0.9, 0.3, 0.2, 0.5;
  te << 0.4, -1.0, 2.0, 0.0;
  const auto train = matrix(tr, {0, 1, 0, 0, 1});
  const auto test = matrix(te);
  const auto r = mhlf_fuse(train, test);
  EXPECT_EQ(order(r.ranking), (std::vector<std::string>{"v102", "v100", "v103", "v101"}));
}

TEST(Mhlf, SourceMismatchThrows) {
  const auto train = matrix(RowMatrixD::Random(2, 4), {1, 0, 0, 0});
  EXPECT_THROW(mhlf_fuse(train, matrix(RowMatrixD::Random(3, 4))), DataError);
}

TEST(Mhlf, DuplicateRowDoesNotChangeRanking) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  RowMatrixD tr(4, 60), te(4, 50);
  std::vector<std::uint8_t> lab(60);
  for (int c = 0; c < 60; ++c) lab[c] = c % 6 == 0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 60; ++c) tr(r, c) = g(rng) + (lab[c] ? 1.0 : 0.0);
    for (int c = 0; c < 50; ++c) te(r, c) = g(rng);
  }
  const auto base = mhlf_fuse(matrix(tr, lab), matrix(te));
  RowMatrixD tr2(5, 60), te2(5, 50);
  tr2 << tr, tr.row(2);
  te2 << te, te.row(2);
  auto a = matrix(tr2, lab), b = matrix(te2);
  a.names[4] = b.names[4] = "s2_dup";
  EXPECT_EQ(order(mhlf_fuse(a, b).ranking), order(base.ranking));
}

TEST(Baselines, AverageAndLinregOnOneRow) {
  RowMatrixD tr(1, 6), te(1, 3);
  tr << 0.1, 0.9, 0.3, 0.2, 0.5, 0.8;
  te << 3, 1, 2;
  const auto train = matrix(tr, {0, 1, 0, 0, 0, 1});
  for (auto m : {BaselineMethod::Average, BaselineMethod::LinReg})
    EXPECT_EQ(order(baseline_fuse(train, matrix(te), m)), (std::vector<std::string>{"v100", "v102", "v101"}));
  EXPECT_THROW(parse_baseline("median"), ConfigError);
}

TEST(Normalize, RowsIndependently) {
  RowMatrixD s(2, 2);
  s << 1, 3, 10, 10;
  const auto n = normalize_rows(matrix(s), NormMethod::MinMax);
  EXPECT_EQ(n.scores(0, 0), 0.0);
  EXPECT_EQ(n.scores(0, 1), 1.0);
}
