#include "cbvr/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "cbvr/io.hpp"
#include "cbvr/kernels.hpp"

namespace cbvr {

void DescriptorSet::validate() const {
  if (coords.rows() != descriptors.rows() || (coords.rows() > 0 && coords.cols() != 3)) {
    throw DataError("descriptor set " + video_id.str() + ": coords must be m x 3");
  }
  if (!descriptors.allFinite()) throw DataError("descriptor set " + video_id.str() + " contains NaN/Inf");
  if (coords.size() > 0 && (coords.minCoeff() < 0.0 || coords.maxCoeff() > 1.0)) {
    throw DataError("descriptor set " + video_id.str() + ": coords outside [0,1]");
  }
}

namespace {

RowMatrixD kmeanspp_seed(const RowMatrixD& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  RowMatrixD c(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  c.row(0) = x.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - c.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int j = 1; j < k; ++j) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) throw DataError("k-means: fewer distinct points than k=" + std::to_string(k));
    double target = unif(rng) * total;
    Eigen::Index chosen = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    while (d2[chosen] <= 0.0) --chosen;  // fell off the end by rounding
    c.row(j) = x.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - c.row(j)).squaredNorm());
  }
  return c;
}

}  // namespace

KMeansResult kmeans_fit(const RowMatrixD& x, int k, std::uint64_t seed, int max_iter) {
  if (k < 1) throw ConfigError("k-means: k must be >= 1");
  if (x.rows() < k) {
    throw DataError("k-means: " + std::to_string(x.rows()) + " rows < k=" + std::to_string(k));
  }
  std::mt19937_64 rng(seed);
  RowMatrixD c = kmeanspp_seed(x, k, rng);
  KMeansResult result;
  std::vector<std::uint32_t> prev;
  for (int it = 0; it < std::max(1, max_iter); ++it) {
    auto a = kernels::assign_nearest(x, c);
    double obj = 0.0;
    for (double v : a.sq_dist) obj += v;
    result.objective.push_back(obj);
    const bool converged = a.index == prev;
    prev = a.index;
    if (converged || it + 1 == max_iter) {
      result.assignment = std::move(a.index);
      break;
    }
    RowMatrixD sum = RowMatrixD::Zero(k, x.cols());
    std::vector<Eigen::Index> count(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      sum.row(a.index[i]) += x.row(i);
      ++count[a.index[i]];
    }
    std::vector<double> far = a.sq_dist;
    for (int j = 0; j < k; ++j) {
      if (count[j] > 0) {
        c.row(j) = sum.row(j) / static_cast<double>(count[j]);
        continue;
      }
      const auto it_far = std::max_element(far.begin(), far.end());
      const auto idx = static_cast<Eigen::Index>(it_far - far.begin());
      c.row(j) = x.row(idx);
      *it_far = -1.0;
    }
  }
  if (result.assignment.empty()) result.assignment = std::move(prev);
  result.codebook.centroids = std::move(c);
  return result;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-row log(w_k N(x | mu_k, var_k)), m x K.
RowMatrixD component_log_densities(const GmmModel& g, const RowMatrixD& x) {
  const Eigen::Index K = g.components();
  const Eigen::Index d = g.dim();
  RowMatrixD out(x.rows(), K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double log_norm = std::log(g.weights[k]) - 0.5 * d * kLog2Pi;
    for (Eigen::Index j = 0; j < d; ++j) log_norm -= 0.5 * std::log(g.variances(k, j));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double q = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = x(i, j) - g.means(k, j);
        q += diff * diff / g.variances(k, j);
      }
      out(i, k) = log_norm - 0.5 * q;
    }
  }
  return out;
}

// Normalizes each row in log space in place; returns the row log-sum-exps.
Eigen::VectorXd softmax_rows(RowMatrixD& logp) {
  Eigen::VectorXd lse(logp.rows());
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double mx = logp.row(i).maxCoeff();
    const double s = (logp.row(i).array() - mx).exp().sum();
    lse[i] = mx + std::log(s);
    logp.row(i) = (logp.row(i).array() - lse[i]).exp();
  }
  return lse;
}

void check_gmm_dim(const GmmModel& g, Eigen::Index d) {
  if (g.dim() != d) throw DataError("dimension mismatch: descriptors d=" + std::to_string(d) +
                                    ", GMM d=" + std::to_string(g.dim()));
}

}  // namespace

double gmm_log_likelihood(const GmmModel& gmm, const RowMatrixD& x) {
  check_gmm_dim(gmm, x.cols());
  auto logp = component_log_densities(gmm, x);
  return softmax_rows(logp).sum();
}

RowMatrixD gmm_responsibilities(const GmmModel& gmm, const RowMatrixD& x) {
  check_gmm_dim(gmm, x.cols());
  auto logp = component_log_densities(gmm, x);
  softmax_rows(logp);
  return logp;
}

GmmFit gmm_fit(const RowMatrixD& x, int K, std::uint64_t seed, int max_iter,
               std::optional<double> var_floor) {
  if (x.rows() < K) {
    throw DataError("GMM: " + std::to_string(x.rows()) + " rows < K=" + std::to_string(K));
  }
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double mean_var = (x.rowwise() - mean).array().square().sum() / static_cast<double>(n * d);
  const double floor = var_floor.value_or(1e-4 * mean_var);
  if (!(floor > 0.0)) throw DataError("GMM: variance floor must be positive (constant data?)");

  const auto km = kmeans_fit(x, K, seed, 50);
  GmmModel g;
  g.var_floor = floor;
  g.weights = Eigen::VectorXd::Zero(K);
  g.means = km.codebook.centroids;
  g.variances = RowMatrixD::Zero(K, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = km.assignment[i];
    g.weights[k] += 1.0;
    g.variances.row(k) += (x.row(i) - g.means.row(k)).array().square().matrix();
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    g.variances.row(k) = (g.variances.row(k) / std::max(1.0, g.weights[k])).cwiseMax(floor);
  }
  g.weights /= static_cast<double>(n);

  GmmFit fit;
  for (int it = 0; it < max_iter; ++it) {
    RowMatrixD resp = component_log_densities(g, x);
    const double ll = softmax_rows(resp).sum();
    if (!fit.log_likelihood.empty() && ll - fit.log_likelihood.back() <= 1e-10 * std::abs(ll)) {
      fit.log_likelihood.push_back(ll);
      break;
    }
    fit.log_likelihood.push_back(ll);
    const Eigen::VectorXd nk = resp.colwise().sum().transpose();
    for (Eigen::Index k = 0; k < K; ++k) {
      if (nk[k] < 1e-10) continue;  // dead component keeps its parameters
      Eigen::RowVectorXd mu = (resp.col(k).transpose() * x) / nk[k];
      Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
      for (Eigen::Index i = 0; i < n; ++i) {
        var += resp(i, k) * (x.row(i) - mu).array().square().matrix();
      }
      g.means.row(k) = mu;
      g.variances.row(k) = (var / nk[k]).cwiseMax(floor);
      g.weights[k] = nk[k] / static_cast<double>(n);
    }
    g.weights /= g.weights.sum();
  }
  fit.model = std::move(g);
  return fit;
}

PcaModel pca_fit(const RowMatrixD& x, int p) {
  if (p < 1 || p > x.cols()) {
    throw ConfigError("PCA: target dimension " + std::to_string(p) + " outside [1, " +
                      std::to_string(x.cols()) + "]");
  }
  if (x.rows() < 1) throw DataError("PCA: no rows");
  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  const bool full = p > std::min(x.rows(), x.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, full ? Eigen::ComputeFullV : Eigen::ComputeThinV);
  m.singular_values = svd.singularValues();
  m.components = svd.matrixV().leftCols(p).transpose();
  for (Eigen::Index r = 0; r < m.components.rows(); ++r) {
    Eigen::Index arg = 0;
    m.components.row(r).cwiseAbs().maxCoeff(&arg);
    if (m.components(r, arg) < 0.0) m.components.row(r) *= -1.0;
  }
  const double total = m.singular_values.squaredNorm();
  const double kept = m.singular_values.head(std::min<Eigen::Index>(p, m.singular_values.size())).squaredNorm();
  m.explained_variance_ratio = total > 0.0 ? kept / total : 1.0;
  return m;
}

RowMatrixD pca_project(const PcaModel& model, const RowMatrixD& x) {
  if (x.cols() != model.mean.size()) throw DataError("PCA: dimension mismatch");
  return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

RowMatrixD sted_augment(const RowMatrixD& projected, const RowMatrixD& coords) {
  if (projected.rows() != coords.rows()) throw DataError("STED: row counts differ");
  if (coords.rows() > 0 && coords.cols() != 3) throw DataError("STED: coords must have 3 columns");
  if (coords.size() > 0 && (coords.minCoeff() < 0.0 || coords.maxCoeff() > 1.0)) {
    throw DataError("STED: coords outside [0,1]");
  }
  RowMatrixD out(projected.rows(), projected.cols() + 3);
  out.leftCols(projected.cols()) = projected;
  if (coords.rows() > 0) out.rightCols(3) = coords;
  return out;
}

void MifsConfig::validate() const {
  if (skip_levels.empty()) throw ConfigError("MIFS: no skip levels");
  for (std::size_t i = 0; i < skip_levels.size(); ++i) {
    if (skip_levels[i] < 0) throw ConfigError("MIFS: negative skip level");
    if (i > 0 && skip_levels[i] <= skip_levels[i - 1]) {
      throw ConfigError("MIFS: skip levels must be distinct and sorted");
    }
  }
}

DescriptorSet mifs_pool(const std::map<int, DescriptorSet>& per_level, const MifsConfig& config) {
  config.validate();
  if (per_level.size() != config.skip_levels.size()) throw DataError("MIFS: level mismatch");
  Eigen::Index total = 0;
  Eigen::Index d = -1;
  const VideoId* vid = nullptr;
  for (int level : config.skip_levels) {
    auto it = per_level.find(level);
    if (it == per_level.end()) throw DataError("MIFS: level mismatch (missing level " + std::to_string(level) + ")");
    const auto& s = it->second;
    if (s.size() > 0) {
      if (d < 0) d = s.dim();
      else if (s.dim() != d) throw DataError("MIFS: descriptor dimension differs across levels");
    }
    if (vid && !(s.video_id == *vid)) throw DataError("MIFS: levels belong to different videos");
    vid = &s.video_id;
    total += s.size();
  }
  if (d < 0) d = per_level.at(config.skip_levels.front()).dim();
  DescriptorSet out;
  out.video_id = *vid;
  out.descriptors.resize(total, d);
  out.coords.resize(total, 3);
  Eigen::Index at = 0;
  for (int level : config.skip_levels) {
    const auto& s = per_level.at(level);
    if (s.size() == 0) continue;
    out.descriptors.middleRows(at, s.size()) = s.descriptors;
    out.coords.middleRows(at, s.size()) = s.coords;
    at += s.size();
  }
  return out;
}

std::vector<PyramidGrid> default_pyramid() { return {{1, 1, 1}, {2, 2, 1}}; }

namespace {

int cell_of(double v, int n) { return std::min(static_cast<int>(std::floor(v * n)), n - 1); }

void check_codebook_dim(const DescriptorSet& set, Eigen::Index d) {
  if (set.size() > 0 && set.dim() != d) {
    throw DataError("dimension mismatch: descriptors d=" + std::to_string(set.dim()) +
                    ", codebook d=" + std::to_string(d));
  }
}

}  // namespace

Eigen::VectorXd bow_encode(const DescriptorSet& set, const Codebook& codebook,
                           std::span<const PyramidGrid> pyramid) {
  check_codebook_dim(set, codebook.dim());
  const Eigen::Index k = codebook.size();
  Eigen::Index total_cells = 0;
  for (const auto& g : pyramid) total_cells += g.cells();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k * total_cells);
  if (set.size() == 0) return out;
  const auto assign = kernels::serial::assign_nearest(set.descriptors, codebook.centroids);
  Eigen::Index offset = 0;
  const double inv_m = 1.0 / static_cast<double>(set.size());
  for (const auto& g : pyramid) {
    for (Eigen::Index i = 0; i < set.size(); ++i) {
      const int cx = cell_of(set.coords(i, 0), g.nx);
      const int cy = cell_of(set.coords(i, 1), g.ny);
      const int ct = cell_of(set.coords(i, 2), g.nt);
      const Eigen::Index cell = (ct * g.ny + cy) * g.nx + cx;
      out[offset + cell * k + assign.index[i]] += inv_m;
    }
    offset += k * g.cells();
  }
  return out;
}

Eigen::VectorXd vlad_encode(const DescriptorSet& set, const Codebook& codebook) {
  check_codebook_dim(set, codebook.dim());
  const Eigen::Index k = codebook.size();
  const Eigen::Index d = codebook.dim();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(k * d);
  if (set.size() == 0) return out;
  const auto assign = kernels::serial::assign_nearest(set.descriptors, codebook.centroids);
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    const auto c = assign.index[i];
    out.segment(c * d, d) += (set.descriptors.row(i) - codebook.centroids.row(c)).transpose();
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    const double nrm = out.segment(c * d, d).norm();
    if (nrm > 0.0) out.segment(c * d, d) /= nrm;
  }
  const double nrm = out.norm();
  if (nrm > 0.0) out /= nrm;
  return out;
}

Eigen::VectorXd fisher_gradients(const DescriptorSet& set, const GmmModel& gmm) {
  check_gmm_dim(gmm, set.size() > 0 ? set.dim() : gmm.dim());
  const Eigen::Index K = gmm.components();
  const Eigen::Index d = gmm.dim();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * K * d);
  if (set.size() == 0) return out;
  const RowMatrixD resp = gmm_responsibilities(gmm, set.descriptors);
  const double m = static_cast<double>(set.size());
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXd gm = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd gv = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < set.size(); ++i) {
      const double r = resp(i, k);
      if (r == 0.0) continue;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double z = (set.descriptors(i, j) - gmm.means(k, j)) / std::sqrt(gmm.variances(k, j));
        gm[j] += r * z;
        gv[j] += r * (z * z - 1.0);
      }
    }
    const double w = gmm.weights[k];
    out.segment(2 * k * d, d) = gm / (m * std::sqrt(w));
    out.segment(2 * k * d + d, d) = gv / (m * std::sqrt(2.0 * w));
  }
  return out;
}

Eigen::VectorXd fv_encode(const DescriptorSet& set, const GmmModel& gmm) {
  return post_normalize(fisher_gradients(set, gmm), PostNorm::PowerL2);
}

PostNorm parse_post_norm(std::string_view token) {
  if (token == "power+l2") return PostNorm::PowerL2;
  if (token == "l2") return PostNorm::L2;
  if (token == "l1") return PostNorm::L1;
  if (token == "none") return PostNorm::None;
  throw ConfigError("unknown post-normalization '" + std::string(token) + "'");
}

Eigen::VectorXd post_normalize(const Eigen::VectorXd& v, PostNorm scheme) {
  Eigen::VectorXd out = v;
  switch (scheme) {
    case PostNorm::None: return out;
    case PostNorm::L1: {
      const double s = out.lpNorm<1>();
      if (s > 0.0) out /= s;
      return out;
    }
    case PostNorm::PowerL2:
      out = out.unaryExpr([](double x) { return std::copysign(std::sqrt(std::abs(x)), x); });
      [[fallthrough]];
    case PostNorm::L2: {
      const double s = out.norm();
      if (s > 0.0) out /= s;
      return out;
    }
  }
  return out;
}

namespace {
constexpr std::string_view kDescriptorMagic = "CBVR-DSC1";
}

std::string encode_descriptor_set(const DescriptorSet& set) {
  set.validate();
  io::ByteWriter w;
  w.bytes(kDescriptorMagic);
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(set.dim()));
  for (Eigen::Index i = 0; i < set.size(); ++i)
    for (Eigen::Index j = 0; j < set.dim(); ++j) w.f32(static_cast<float>(set.descriptors(i, j)));
  for (Eigen::Index i = 0; i < set.size(); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) w.f32(static_cast<float>(set.coords(i, j)));
  w.short_string(set.video_id.str());
  return w.data();
}

DescriptorSet decode_descriptor_set(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.bytes(kDescriptorMagic.size()) != kDescriptorMagic) throw DataError("bad descriptor-file magic");
  const auto m = r.u32();
  const auto d = r.u32();
  DescriptorSet s;
  s.descriptors.resize(m, d);
  s.coords.resize(m, 3);
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = 0; j < d; ++j) s.descriptors(i, j) = r.f32();
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = 0; j < 3; ++j) s.coords(i, j) = r.f32();
  s.video_id = VideoId(r.short_string());
  s.validate();
  return s;
}

void write_descriptor_set(const std::filesystem::path& path, const DescriptorSet& set) {
  io::write_file_atomic(path, encode_descriptor_set(set));
}

DescriptorSet read_descriptor_set(const std::filesystem::path& path) {
  return decode_descriptor_set(io::read_file(path));
}

}  // namespace cbvr
