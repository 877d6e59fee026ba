#pragma once

// Data-parallel inner loops. Each kernel has a serial reference and an OpenMP
// version; every output element is computed by the same scalar code in both,
// so results are bit-identical regardless of thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "cbvr/core.hpp"

namespace cbvr {

/// Caps OpenMP worker threads for all parallel kernels (n >= 1).
void set_thread_count(int n);
int thread_count();

enum class AdditiveKernel { Chi2, Intersection };

struct Assignment {
  std::vector<std::uint32_t> index;  // nearest centroid, ties to lowest index
  std::vector<double> sq_dist;
};

using CodeMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace kernels {

namespace serial {
std::vector<double> dense_scores(const RowMatrixF& x, std::span<const double> w, double b);
std::vector<double> lut_scores(const CodeMatrix& codes, const RowMatrixD& lut, double b);
Assignment assign_nearest(const RowMatrixD& x, const RowMatrixD& centroids);
Eigen::MatrixXd additive_gram(const RowMatrixD& x, const RowMatrixD& y, AdditiveKernel kernel);
}  // namespace serial

namespace omp {
std::vector<double> dense_scores(const RowMatrixF& x, std::span<const double> w, double b);
std::vector<double> lut_scores(const CodeMatrix& codes, const RowMatrixD& lut, double b);
Assignment assign_nearest(const RowMatrixD& x, const RowMatrixD& centroids);
Eigen::MatrixXd additive_gram(const RowMatrixD& x, const RowMatrixD& y, AdditiveKernel kernel);
}  // namespace omp

// Default entry points dispatch to the OpenMP versions.
using omp::additive_gram;
using omp::assign_nearest;
using omp::dense_scores;
using omp::lut_scores;

}  // namespace kernels
}  // namespace cbvr
