#pragma once

#include <span>
#include <string_view>

#include "cbvr/core.hpp"
#include "cbvr/kernels.hpp"

namespace cbvr {

AdditiveKernel parse_additive_kernel(std::string_view token);

/// Exact additive kernel between two non-negative vectors.
double exact_kernel(std::span<const double> x, std::span<const double> y, AdditiveKernel kernel);

/// Homogeneous kernel map: every input component becomes 2n+1 outputs.
struct HomogeneousMapConfig {
  AdditiveKernel kernel = AdditiveKernel::Chi2;
  int order = 1;        // n
  double period = 0.5;  // L, spectrum sampling step
  void validate() const;
  Eigen::Index output_dim(Eigen::Index d) const { return d * (2 * order + 1); }
};

/// Spectrum of the kernel's signature at frequency omega.
double kernel_spectrum(AdditiveKernel kernel, double omega);

Eigen::VectorXd efm_map(std::span<const double> x, const HomogeneousMapConfig& config);
/// Row-wise efm_map over a whole feature matrix; keeps ids and appends ":efm" to the name.
FeatureMatrix efm_map(const FeatureMatrix& fm, const HomogeneousMapConfig& config);

}  // namespace cbvr
