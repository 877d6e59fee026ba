#include "cbvr/kernel_maps.hpp"

#include <cmath>
#include <numbers>

namespace cbvr {

AdditiveKernel parse_additive_kernel(std::string_view token) {
  if (token == "chi2") return AdditiveKernel::Chi2;
  if (token == "intersection") return AdditiveKernel::Intersection;
  throw ConfigError("unknown additive kernel '" + std::string(token) + "'");
}

double exact_kernel(std::span<const double> x, std::span<const double> y, AdditiveKernel kernel) {
  if (x.size() != y.size()) throw DataError("kernel: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0 || y[i] < 0.0) throw DataError("kernel: negative component");
    if (kernel == AdditiveKernel::Chi2) {
      const double s = x[i] + y[i];
      if (s > 0.0) acc += 2.0 * x[i] * y[i] / s;
    } else {
      acc += std::min(x[i], y[i]);
    }
  }
  return acc;
}

void HomogeneousMapConfig::validate() const {
  if (order < 0) throw ConfigError("EFM: order must be >= 0");
  if (!(period > 0.0)) throw ConfigError("EFM: period must be > 0");
}

double kernel_spectrum(AdditiveKernel kernel, double omega) {
  if (kernel == AdditiveKernel::Chi2) return 1.0 / std::cosh(std::numbers::pi * omega);
  return (2.0 / std::numbers::pi) / (1.0 + 4.0 * omega * omega);
}

namespace {

// Components below this are treated as exact zeros (log underflow guard).
constexpr double kZeroCutoff = 1e-12;

void map_into(std::span<const double> x, const HomogeneousMapConfig& c, double* out) {
  const int n = c.order;
  const Eigen::Index stride = 2 * n + 1;
  const double L = c.period;
  const double k0 = L * kernel_spectrum(c.kernel, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double* o = out + static_cast<Eigen::Index>(i) * stride;
    const double v = x[i];
    if (v < 0.0) throw DataError("EFM: negative input component");
    if (v < kZeroCutoff) {
      for (Eigen::Index j = 0; j < stride; ++j) o[j] = 0.0;
      continue;
    }
    const double lv = std::log(v);
    o[0] = std::sqrt(v * k0);
    for (int j = 1; j <= n; ++j) {
      const double a = std::sqrt(2.0 * v * L * kernel_spectrum(c.kernel, j * L));
      o[2 * j - 1] = a * std::cos(j * L * lv);
      o[2 * j] = a * std::sin(j * L * lv);
    }
  }
}

}  // namespace

Eigen::VectorXd efm_map(std::span<const double> x, const HomogeneousMapConfig& config) {
  config.validate();
  Eigen::VectorXd out(config.output_dim(static_cast<Eigen::Index>(x.size())));
  map_into(x, config, out.data());
  return out;
}

FeatureMatrix efm_map(const FeatureMatrix& fm, const HomogeneousMapConfig& config) {
  config.validate();
  const Eigen::Index d = fm.dim();
  RowMatrixF out(fm.size(), config.output_dim(d));
  std::vector<double> row(static_cast<std::size_t>(d));
  Eigen::VectorXd mapped(config.output_dim(d));
  for (Eigen::Index i = 0; i < fm.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) row[j] = fm.values()(i, j);
    map_into(row, config, mapped.data());
    out.row(i) = mapped.transpose().cast<float>();
  }
  return FeatureMatrix(fm.name() + ":efm", fm.ids(), std::move(out));
}

}  // namespace cbvr
