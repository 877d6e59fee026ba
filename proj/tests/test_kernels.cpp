#include <gtest/gtest.h>

#include <random>

#include "cbvr/kernels.hpp"

using namespace cbvr;

namespace {

RowMatrixD random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, bool nonneg = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  RowMatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nonneg ? std::abs(g(rng)) : g(rng);
  return m;
}

class KernelThreads : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { set_thread_count(GetParam()); }
  void TearDown() override { set_thread_count(1); }
};

}  // namespace

TEST_P(KernelThreads, DenseScoresMatchSerial) {
  const RowMatrixF x = random_matrix(257, 33, 1).cast<float>();
  const RowMatrixD w = random_matrix(1, 33, 2);
  const std::span<const double> ws(w.data(), 33);
  EXPECT_EQ(kernels::omp::dense_scores(x, ws, 0.25), kernels::serial::dense_scores(x, ws, 0.25));
}

TEST_P(KernelThreads, LutScoresMatchSerial) {
  std::mt19937_64 rng(3);
  CodeMatrix codes(301, 6);
  for (Eigen::Index i = 0; i < codes.size(); ++i) codes.data()[i] = static_cast<std::uint8_t>(rng() % 16);
  const RowMatrixD lut = random_matrix(6, 16, 4);
  EXPECT_EQ(kernels::omp::lut_scores(codes, lut, -1.0), kernels::serial::lut_scores(codes, lut, -1.0));
}

TEST_P(KernelThreads, AssignNearestMatchesSerial) {
  const RowMatrixD x = random_matrix(500, 8, 5);
  const RowMatrixD c = random_matrix(13, 8, 6);
  const auto a = kernels::omp::assign_nearest(x, c);
  const auto b = kernels::serial::assign_nearest(x, c);
  EXPECT_EQ(a.index, b.index);
  EXPECT_EQ(a.sq_dist, b.sq_dist);
}

TEST_P(KernelThreads, AdditiveGramMatchesSerial) {
  const RowMatrixD x = random_matrix(40, 12, 7, true);
  const RowMatrixD y = random_matrix(29, 12, 8, true);
  for (auto k : {AdditiveKernel::Chi2, AdditiveKernel::Intersection}) {
    const Eigen::MatrixXd a = kernels::omp::additive_gram(x, y, k);
    const Eigen::MatrixXd b = kernels::serial::additive_gram(x, y, k);
    EXPECT_TRUE((a.array() == b.array()).all());
  }
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelThreads, ::testing::Values(1, 2, 3, 4));

TEST(Kernels, AssignNearestTiesGoToLowestIndex) {
  RowMatrixD x(1, 2);
  x << 0.5, 0.0;
  RowMatrixD c(2, 2);
  c << 0.0, 0.0, 1.0, 0.0;
  EXPECT_EQ(kernels::assign_nearest(x, c).index[0], 0u);
}

TEST(Kernels, DenseScoresAreDotPlusBias) {
  RowMatrixF x(2, 3);
  x << 1, 2, 3, -1, 0, 4;
  const std::vector<double> w{0.5, 1.0, -1.0};
  const auto s = kernels::dense_scores(x, w, 2.0);
  EXPECT_DOUBLE_EQ(s[0], 0.5 + 2.0 - 3.0 + 2.0);
  EXPECT_DOUBLE_EQ(s[1], -0.5 - 4.0 + 2.0);
}

TEST(Kernels, ThreadCountClampsToOne) {
  set_thread_count(0);
  EXPECT_EQ(thread_count(), 1);
}
