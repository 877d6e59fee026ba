#include <gtest/gtest.h>

#include <random>

#include "cbvr/encoders.hpp"

using namespace cbvr;

namespace {

DescriptorSet make_set(const RowMatrixD& desc, RowMatrixD coords = {}, std::string id = "v") {
  DescriptorSet s;
  s.video_id = VideoId(std::move(id));
  s.descriptors = desc;
  s.coords = coords.size() ? coords : RowMatrixD::Constant(desc.rows(), 3, 0.25);
  return s;
}

double sse_of_partition(const RowMatrixD& x, unsigned mask) {
  double total = 0.0;
  for (int side = 0; side < 2; ++side) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(x.cols());
    int n = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (((mask >> i) & 1u) == static_cast<unsigned>(side)) sum += x.row(i), ++n;
    if (n == 0) continue;
    const Eigen::RowVectorXd mu = sum / n;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (((mask >> i) & 1u) == static_cast<unsigned>(side)) total += (x.row(i) - mu).squaredNorm();
  }
  return total;
}

}  // namespace

TEST(KMeans, SingleClusterIsMean) {
  RowMatrixD x(4, 2);
  x << 0, 0, 2, 0, 2, 4, 0, 4;
  const auto r = kmeans_fit(x, 1, 0);
  EXPECT_NEAR(r.codebook.centroids(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(r.codebook.centroids(0, 1), 2.0, 1e-12);
}

TEST(KMeans, RepeatedDistinctPointsGiveZeroObjective) {
  RowMatrixD x(9, 2);
  for (int i = 0; i < 9; ++i) x.row(i) << (i % 3) * 10.0, (i % 3) * -5.0;
  const auto r = kmeans_fit(x, 3, 4);
  EXPECT_EQ(r.objective.back(), 0.0);
}

TEST(KMeans, TwoBlobsMatchExhaustivePartition) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 0.5);
  RowMatrixD x(12, 2);
  for (int i = 0; i < 12; ++i) x.row(i) << g(rng) + (i < 6 ? 0.0 : 6.0), g(rng) + (i < 6 ? 0.0 : 3.0);
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < (1u << 11); ++mask) best = std::min(best, sse_of_partition(x, mask));
  const auto r = kmeans_fit(x, 2, 9);
  EXPECT_NEAR(r.objective.back(), best, 1e-9);
}

TEST(KMeans, ObjectiveNeverIncreases) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  RowMatrixD x(200, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  const auto r = kmeans_fit(x, 7, 1);
  for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-9);
}

TEST(KMeans, TooFewRowsThrows) { EXPECT_THROW(kmeans_fit(RowMatrixD::Zero(2, 2), 3, 0), DataError); }

TEST(Gmm, SingleComponentMatchesSampleMoments) {
  RowMatrixD x(4, 2);
  x << 1, 0, 3, 0, 1, 2, 3, 2;
  const auto fit = gmm_fit(x, 1, 0);
  EXPECT_NEAR(fit.model.weights[0], 1.0, 1e-12);
  EXPECT_NEAR(fit.model.means(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(fit.model.means(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(fit.model.variances(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(fit.model.variances(0, 1), 1.0, 1e-12);
}

TEST(Gmm, LogLikelihoodNonDecreasingAndBlobsSeparated) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  RowMatrixD x(100, 2);
  for (int i = 0; i < 100; ++i) x.row(i) << g(rng) + (i < 50 ? 0.0 : 10.0), g(rng);
  const auto fit = gmm_fit(x, 2, 3);
  for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
    EXPECT_GE(fit.log_likelihood[i], fit.log_likelihood[i - 1] - 1e-9 * std::abs(fit.log_likelihood[i - 1]));
  const RowMatrixD r = gmm_responsibilities(fit.model, x);
  const Eigen::Index a = fit.model.means(0, 0) < 5.0 ? 0 : 1;
  for (int i = 0; i < 100; ++i) EXPECT_GE(r(i, i < 50 ? a : 1 - a), 0.99) << i;
}

TEST(Pca, FullRankReconstructs) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  RowMatrixD x(10, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  const auto m = pca_fit(x, 3);
  const RowMatrixD back = (pca_project(m, x) * m.components).rowwise() + m.mean.transpose();
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, LineDataHasUnitExplainedRatio) {
  RowMatrixD x(5, 2);
  for (int i = 0; i < 5; ++i) x.row(i) << i, 2.0 * i + 1.0;
  EXPECT_NEAR(pca_fit(x, 1).explained_variance_ratio, 1.0, 1e-8);
}

TEST(Pca, SingularValuesMatchFrozenOracle) {
  RowMatrixD x(5, 3);
  x << 2, 0, 1, 1, 3, -1, 0, 1, 4, 5, 2, 2, -1, -2, 0;
  const auto m = pca_fit(x, 2);
  const double want[] = {5.31984353664351, 3.83396201671747, 2.79284800875379};
  ASSERT_EQ(m.singular_values.size(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(m.singular_values[i], want[i], 1e-9);
}

TEST(Pca, TargetAboveDimensionThrows) { EXPECT_THROW(pca_fit(RowMatrixD::Ones(4, 2), 3), ConfigError); }

TEST(Sted, AppendsCoordinates) {
  RowMatrixD p(1, 2);
  p << 0.5, -0.3;
  const RowMatrixD out = sted_augment(p, RowMatrixD::Zero(1, 3));
  ASSERT_EQ(out.cols(), 5);
  EXPECT_EQ(out(0, 0), 0.5);
  EXPECT_EQ(out(0, 1), -0.3);
  EXPECT_EQ(out.rightCols(3).cwiseAbs().sum(), 0.0);
  EXPECT_THROW(sted_augment(p, RowMatrixD::Constant(1, 3, 1.5)), DataError);
}

TEST(Mifs, SingleLevelIsIdentity) {
  const auto s = make_set(RowMatrixD::Random(4, 3));
  const auto out = mifs_pool({{0, s}}, MifsConfig{{0}});
  EXPECT_EQ(out.descriptors, s.descriptors);
  EXPECT_EQ(out.coords, s.coords);
}

TEST(Mifs, CountsAdd) {
  std::map<int, DescriptorSet> levels{{0, make_set(RowMatrixD::Random(10, 3))},
                                      {2, make_set(RowMatrixD::Random(6, 3))},
                                      {5, make_set(RowMatrixD::Random(3, 3))}};
  EXPECT_EQ(mifs_pool(levels, MifsConfig{}).size(), 19);
  levels.erase(5);
  EXPECT_THROW(mifs_pool(levels, MifsConfig{}), DataError);
}

TEST(Bow, AllNearestFirstCentroid) {
  Codebook cb{RowMatrixD(2, 1)};
  cb.centroids << 0.0, 10.0;
  RowMatrixD d(3, 1);
  d << 0.1, -0.2, 1.0;
  const std::vector<PyramidGrid> flat{{1, 1, 1}};
  const Eigen::VectorXd h = bow_encode(make_set(d), cb, flat);
  ASSERT_EQ(h.size(), 2);
  EXPECT_DOUBLE_EQ(h[0], 1.0);
  EXPECT_DOUBLE_EQ(h[1], 0.0);
}

TEST(Bow, PyramidCellsMatchHandCount) {
  Codebook cb{RowMatrixD(2, 1)};
  cb.centroids << 0.0, 1.0;
  RowMatrixD d(6, 1), c(6, 3);
  // descriptor value, then (x, y, t)
  d << 0, 1, 1, 0, 0, 1;
  c << 0.1, 0.1, 0, 0.9, 0.1, 0, 0.6, 0.2, 0, 0.2, 0.8, 0.5, 0.7, 0.7, 1, 0.5, 0.5, 0;
  const Eigen::VectorXd h = bow_encode(make_set(d, c), cb, default_pyramid());
  ASSERT_EQ(h.size(), 2 + 2 * 4);
  Eigen::VectorXd want = Eigen::VectorXd::Zero(10);
  want[0] = 3.0 / 6;  // level 0: three zeros
  want[1] = 3.0 / 6;
  // level 1 cells (x-major within y): (0,0) (1,0) (0,1) (1,1)
  want[2 + 0 * 2 + 0] = 1.0 / 6;  // (0.1,0.1) -> 0
  want[2 + 1 * 2 + 1] = 2.0 / 6;  // (0.9,0.1), (0.6,0.2) -> 1
  want[2 + 2 * 2 + 0] = 1.0 / 6;  // (0.2,0.8) -> 0
  want[2 + 3 * 2 + 0] = 1.0 / 6;  // (0.7,0.7) -> 0
  want[2 + 3 * 2 + 1] = 1.0 / 6;  // (0.5,0.5) -> 1
  EXPECT_LT((h - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Bow, EmptySetIsZeroAndDimensionChecked) {
  Codebook cb{RowMatrixD::Zero(3, 2)};
  const Eigen::VectorXd h = bow_encode(make_set(RowMatrixD(0, 2)), cb, default_pyramid());
  EXPECT_EQ(h.size(), 15);
  EXPECT_EQ(h.cwiseAbs().sum(), 0.0);
  EXPECT_THROW(bow_encode(make_set(RowMatrixD::Zero(1, 4)), cb, default_pyramid()), DataError);
}

TEST(Vlad, DescriptorOnCentroidGivesZero) {
  Codebook cb{RowMatrixD(1, 2)};
  cb.centroids << 1.0, 2.0;
  EXPECT_EQ(vlad_encode(make_set(cb.centroids), cb).cwiseAbs().sum(), 0.0);
}

TEST(Vlad, OriginCentroidTwoAxes) {
  Codebook cb{RowMatrixD::Zero(1, 2)};
  RowMatrixD d(2, 2);
  d << 1, 0, 0, 1;
  const Eigen::VectorXd v = vlad_encode(make_set(d), cb);
  EXPECT_NEAR(v[0], 0.70710678118654752, 1e-15);
  EXPECT_NEAR(v[1], 0.70710678118654752, 1e-15);
}

TEST(FisherVector, DimensionArithmetic) {
  // 2 * K * d with K = 256, d = 213.
  GmmModel g;
  g.weights = Eigen::VectorXd::Constant(256, 1.0 / 256);
  g.means = RowMatrixD::Zero(256, 213);
  g.variances = RowMatrixD::Ones(256, 213);
  RowMatrixD d = RowMatrixD::Zero(2, 213);
  d(1, 0) = 0.5;
  EXPECT_EQ(fv_encode(make_set(d), g).size(), 109056);
}

TEST(FisherVector, DescriptorsAtMeanGiveZeroMeanGradient) {
  GmmModel g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means = RowMatrixD(1, 2);
  g.means << 0.3, -1.0;
  g.variances = RowMatrixD::Ones(1, 2);
  RowMatrixD d(3, 2);
  d << 0.3, -1.0, 0.3, -1.0, 0.3, -1.0;
  const Eigen::VectorXd fv = fisher_gradients(make_set(d), g);
  EXPECT_LT(fv.head(2).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FisherVector, OneDimensionalToyMatchesFrozenValues) {
  GmmModel g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means = RowMatrixD::Constant(1, 1, 1.0);
  g.variances = RowMatrixD::Constant(1, 1, 4.0);
  RowMatrixD d(3, 1);
  d << 0.5, 1.0, 2.0;
  const Eigen::VectorXd fv = fisher_gradients(make_set(d), g);
  EXPECT_NEAR(fv[0], 0.08333333333333333, 1e-9);
  EXPECT_NEAR(fv[1], -0.6334498248129488, 1e-9);
}

TEST(FisherVector, EmptySetIsZero) {
  GmmModel g;
  g.weights = Eigen::VectorXd::Ones(2) / 2;
  g.means = RowMatrixD::Zero(2, 3);
  g.variances = RowMatrixD::Ones(2, 3);
  const Eigen::VectorXd fv = fv_encode(make_set(RowMatrixD(0, 3)), g);
  EXPECT_EQ(fv.size(), 12);
  EXPECT_EQ(fv.cwiseAbs().sum(), 0.0);
}

TEST(PostNormalize, Schemes) {
  Eigen::VectorXd v(2);
  v << 1, -4;
  const Eigen::VectorXd p = post_normalize(v, PostNorm::PowerL2);
  EXPECT_NEAR(p[0], 0.4472135954999579, 1e-12);
  EXPECT_NEAR(p[1], -0.8944271909999159, 1e-12);
  EXPECT_EQ(post_normalize(Eigen::VectorXd::Zero(3), PostNorm::PowerL2).cwiseAbs().sum(), 0.0);
  v << 1, 3;
  const Eigen::VectorXd l1 = post_normalize(v, PostNorm::L1);
  EXPECT_DOUBLE_EQ(l1[0], 0.25);
  EXPECT_DOUBLE_EQ(l1[1], 0.75);
}

TEST(DescriptorFile, RoundTripAndTruncation) {
  RowMatrixD d(2, 3);
  d << 1, 2, 3, 4, 5, 6;
  RowMatrixD c(2, 3);
  c << 0, 0.5, 1, 0.25, 0.25, 0.75;
  const auto bytes = encode_descriptor_set(make_set(d, c, "vid7"));
  const auto back = decode_descriptor_set(bytes);
  EXPECT_EQ(back.video_id.str(), "vid7");
  EXPECT_EQ(back.descriptors, d);
  EXPECT_EQ(encode_descriptor_set(back), bytes);
  EXPECT_THROW(decode_descriptor_set(bytes.substr(0, 20)), DataError);
}
