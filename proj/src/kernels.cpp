#include "cbvr/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <limits>

namespace cbvr {

namespace {
int g_threads = 1;
}

void set_thread_count(int n) {
  g_threads = std::max(1, n);
  omp_set_num_threads(g_threads);
}

int thread_count() { return g_threads; }

namespace kernels {

namespace {

inline double dot_row(const RowMatrixF& x, Eigen::Index i, std::span<const double> w) {
  const float* row = x.data() + i * x.cols();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) acc += static_cast<double>(row[j]) * w[j];
  return acc;
}

inline double lut_row(const CodeMatrix& codes, Eigen::Index i, const RowMatrixD& lut) {
  const std::uint8_t* row = codes.data() + i * codes.cols();
  double acc = 0.0;
  for (Eigen::Index s = 0; s < codes.cols(); ++s) acc += lut(s, row[s]);
  return acc;
}

inline void nearest(const RowMatrixD& x, Eigen::Index i, const RowMatrixD& c, Assignment& out) {
  const Eigen::Index d = x.cols();
  const double* xi = x.data() + i * d;
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t arg = 0;
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    const double* ck = c.data() + k * d;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double diff = xi[j] - ck[j];
      acc += diff * diff;
    }
    if (acc < best) {
      best = acc;
      arg = static_cast<std::uint32_t>(k);
    }
  }
  out.index[static_cast<std::size_t>(i)] = arg;
  out.sq_dist[static_cast<std::size_t>(i)] = best;
}

inline double additive_value(const double* a, const double* b, Eigen::Index d, AdditiveKernel kernel) {
  double acc = 0.0;
  if (kernel == AdditiveKernel::Chi2) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double s = a[j] + b[j];
      if (s > 0.0) acc += 2.0 * a[j] * b[j] / s;
    }
  } else {
    for (Eigen::Index j = 0; j < d; ++j) acc += std::min(a[j], b[j]);
  }
  return acc;
}

Assignment make_assignment(Eigen::Index n) {
  Assignment a;
  a.index.assign(static_cast<std::size_t>(n), 0);
  a.sq_dist.assign(static_cast<std::size_t>(n), 0.0);
  return a;
}

void check_dims(const RowMatrixD& x, const RowMatrixD& y) {
  if (x.cols() != y.cols()) throw DataError("dimension mismatch in kernel evaluation");
}

}  // namespace

namespace serial {

std::vector<double> dense_scores(const RowMatrixF& x, std::span<const double> w, double b) {
  if (static_cast<Eigen::Index>(w.size()) != x.cols()) throw DataError("weight dimension mismatch");
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = dot_row(x, i, w) + b;
  return out;
}

std::vector<double> lut_scores(const CodeMatrix& codes, const RowMatrixD& lut, double b) {
  std::vector<double> out(static_cast<std::size_t>(codes.rows()));
  for (Eigen::Index i = 0; i < codes.rows(); ++i) out[static_cast<std::size_t>(i)] = lut_row(codes, i, lut) + b;
  return out;
}

Assignment assign_nearest(const RowMatrixD& x, const RowMatrixD& centroids) {
  check_dims(x, centroids);
  auto out = make_assignment(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) nearest(x, i, centroids, out);
  return out;
}

Eigen::MatrixXd additive_gram(const RowMatrixD& x, const RowMatrixD& y, AdditiveKernel kernel) {
  check_dims(x, y);
  Eigen::MatrixXd g(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      g(i, j) = additive_value(x.data() + i * x.cols(), y.data() + j * y.cols(), x.cols(), kernel);
  return g;
}

}  // namespace serial

namespace omp {

std::vector<double> dense_scores(const RowMatrixF& x, std::span<const double> w, double b) {
  if (static_cast<Eigen::Index>(w.size()) != x.cols()) throw DataError("weight dimension mismatch");
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  const Eigen::Index n = x.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = dot_row(x, i, w) + b;
  return out;
}

std::vector<double> lut_scores(const CodeMatrix& codes, const RowMatrixD& lut, double b) {
  std::vector<double> out(static_cast<std::size_t>(codes.rows()));
  const Eigen::Index n = codes.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lut_row(codes, i, lut) + b;
  return out;
}

Assignment assign_nearest(const RowMatrixD& x, const RowMatrixD& centroids) {
  check_dims(x, centroids);
  auto out = make_assignment(x.rows());
  const Eigen::Index n = x.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) nearest(x, i, centroids, out);
  return out;
}

Eigen::MatrixXd additive_gram(const RowMatrixD& x, const RowMatrixD& y, AdditiveKernel kernel) {
  check_dims(x, y);
  Eigen::MatrixXd g(x.rows(), y.rows());
  const Eigen::Index n = x.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      g(i, j) = additive_value(x.data() + i * x.cols(), y.data() + j * y.cols(), x.cols(), kernel);
  return g;
}

}  // namespace omp

}  // namespace kernels
}  // namespace cbvr
