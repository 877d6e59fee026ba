#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbvr/core.hpp"

namespace cbvr {

/// Local descriptors of one video plus their (x, y, t) positions in [0,1].
struct DescriptorSet {
  VideoId video_id;
  RowMatrixD descriptors;  // m x d_loc
  RowMatrixD coords;       // m x 3

  Eigen::Index size() const { return descriptors.rows(); }
  Eigen::Index dim() const { return descriptors.cols(); }
  void validate() const;
};

struct PcaModel {
  Eigen::VectorXd mean;
  RowMatrixD components;  // p x d_loc, orthonormal rows
  Eigen::VectorXd singular_values;  // all singular values of the centered data
  double explained_variance_ratio = 0.0;
};

struct Codebook {
  RowMatrixD centroids;  // k x d
  Eigen::Index size() const { return centroids.rows(); }
  Eigen::Index dim() const { return centroids.cols(); }
};

struct KMeansResult {
  Codebook codebook;
  std::vector<std::uint32_t> assignment;
  std::vector<double> objective;  // sum of squared distances after each assignment step
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded at the
/// point farthest from its centroid.
KMeansResult kmeans_fit(const RowMatrixD& x, int k, std::uint64_t seed, int max_iter = 50);

struct GmmModel {
  Eigen::VectorXd weights;  // K, on the simplex
  RowMatrixD means;         // K x d
  RowMatrixD variances;     // K x d, diagonal, >= var_floor
  double var_floor = 0.0;

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }
};

struct GmmFit {
  GmmModel model;
  std::vector<double> log_likelihood;  // per EM iteration, before the M-step
};

/// Diagonal-covariance EM initialized from kmeans_fit. Without an explicit
/// floor the variance floor is 1e-4 of the mean per-dimension data variance.
GmmFit gmm_fit(const RowMatrixD& x, int components, std::uint64_t seed, int max_iter = 100,
               std::optional<double> var_floor = std::nullopt);

double gmm_log_likelihood(const GmmModel& gmm, const RowMatrixD& x);
/// Posterior component probabilities, m x K.
RowMatrixD gmm_responsibilities(const GmmModel& gmm, const RowMatrixD& x);

PcaModel pca_fit(const RowMatrixD& x, int p);
RowMatrixD pca_project(const PcaModel& model, const RowMatrixD& x);

/// Appends the (x, y, t) coordinates to each projected descriptor.
RowMatrixD sted_augment(const RowMatrixD& projected, const RowMatrixD& coords);

struct MifsConfig {
  std::vector<int> skip_levels{0, 2, 5};
  void validate() const;
};

/// Pools descriptors extracted at several frame-skip levels into one set.
DescriptorSet mifs_pool(const std::map<int, DescriptorSet>& per_level, const MifsConfig& config);

struct PyramidGrid {
  int nx = 1, ny = 1, nt = 1;
  int cells() const { return nx * ny * nt; }
};

std::vector<PyramidGrid> default_pyramid();

/// Hard-assignment histograms per pyramid cell, each level L1-normalized.
Eigen::VectorXd bow_encode(const DescriptorSet& set, const Codebook& codebook,
                           std::span<const PyramidGrid> pyramid);
Eigen::VectorXd vlad_encode(const DescriptorSet& set, const Codebook& codebook);

/// Unnormalized Fisher vector: per component [mean block, variance block].
Eigen::VectorXd fisher_gradients(const DescriptorSet& set, const GmmModel& gmm);
/// fisher_gradients followed by power and L2 normalization.
Eigen::VectorXd fv_encode(const DescriptorSet& set, const GmmModel& gmm);

enum class PostNorm { PowerL2, L2, L1, None };
PostNorm parse_post_norm(std::string_view token);
Eigen::VectorXd post_normalize(const Eigen::VectorXd& v, PostNorm scheme);

// Descriptor file: "CBVR-DSC1", u32 m, u32 d_loc, descriptors, coords, id.
std::string encode_descriptor_set(const DescriptorSet& set);
DescriptorSet decode_descriptor_set(std::string_view bytes);
void write_descriptor_set(const std::filesystem::path& path, const DescriptorSet& set);
DescriptorSet read_descriptor_set(const std::filesystem::path& path);

}  // namespace cbvr
