#include "cbvr/reranking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "cbvr/learners.hpp"

namespace cbvr {

SpScheme parse_sp_scheme(std::string_view token) {
  if (token == "binary") return SpScheme::Binary;
  if (token == "mixture") return SpScheme::Mixture;
  throw ConfigError("unknown self-paced scheme '" + std::string(token) + "'");
}

namespace {

void check_lambdas(double l1, double l2, SpScheme scheme) {
  if (!(l1 > 0.0)) throw ConfigError("self-paced: lambda1 must be > 0");
  if (scheme == SpScheme::Mixture && !(l2 > 0.0 && l2 < l1)) {
    throw ConfigError("self-paced: mixture needs lambda1 > lambda2 > 0");
  }
}

}  // namespace

void PrfConfig::validate() const {
  if (iterations < 1 || iterations > 2) throw ConfigError("PRF: iterations must be 1 or 2");
  if (k_pos < 1 || k_neg < 1) throw ConfigError("PRF: k_pos and k_neg must be >= 1");
  if (inner_rounds < 1) throw ConfigError("PRF: inner_rounds must be >= 1");
  if (!(ridge_lambda > 0.0)) throw ConfigError("PRF: ridge_lambda must be > 0");
  for (const auto& p : lambdas) check_lambdas(p.l1, p.l2, scheme);
}

PseudoLabels mmprf_init(const RankedList& initial, int k_pos, int k_neg, std::uint64_t seed) {
  const auto n = initial.size();
  const std::size_t bottom_start = n - n / 2;
  if (k_pos < 1 || k_neg < 1 || n < static_cast<std::size_t>(k_pos + k_neg) ||
      static_cast<std::size_t>(k_pos) > bottom_start || n / 2 < static_cast<std::size_t>(k_neg)) {
    throw DataError("PRF: collection of " + std::to_string(n) + " videos is too small for k_pos=" +
                    std::to_string(k_pos) + ", k_neg=" + std::to_string(k_neg));
  }
  PseudoLabels out;
  const auto& e = initial.entries();
  for (int i = 0; i < k_pos; ++i) out.positives.push_back(e[static_cast<std::size_t>(i)].id);
  std::vector<std::size_t> bottom(n - bottom_start);
  std::iota(bottom.begin(), bottom.end(), bottom_start);
  std::vector<std::size_t> picked;
  std::mt19937_64 rng(seed);
  std::sample(bottom.begin(), bottom.end(), std::back_inserter(picked), k_neg, rng);
  for (std::size_t i : picked) out.negatives.push_back(e[i].id);
  return out;
}

std::vector<double> spar_weights(std::span<const double> losses, double l1, double l2, SpScheme scheme) {
  check_lambdas(l1, l2, scheme);
  std::vector<double> v(losses.size());
  const double zeta = scheme != SpScheme::Mixture ? 0.0 : std::isfinite(l1) ? l1 * l2 / (l1 - l2) : l2;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const double l = losses[i];
    if (!(l >= 0.0)) throw DataError("self-paced: losses must be >= 0");
    if (scheme == SpScheme::Binary) {
      v[i] = l < l1 ? 1.0 : 0.0;
    } else if (l <= l2) {
      v[i] = 1.0;
    } else if (l >= l1) {
      v[i] = 0.0;
    } else {
      v[i] = std::clamp(zeta / l - zeta / l1, 0.0, 1.0);
    }
  }
  return v;
}

double spar_regularizer(double v, double l1, double l2, SpScheme scheme) {
  if (!std::isfinite(l1)) return 0.0;  // every sample is easy; constant term
  if (scheme == SpScheme::Binary) return -l1 * v;
  const double zeta = l1 * l2 / (l1 - l2);
  return -zeta * std::log(v + zeta / l1);
}

namespace {

// Collection view shared by the PRF loops: columns in ascending id order and
// per-feature standardized rows.
struct Collection {
  std::string event_id;
  std::vector<VideoId> ids;
  std::unordered_map<VideoId, Eigen::Index> col;
  std::vector<RowMatrixD> z;

  Collection(const RankedList& initial, std::span<const FeatureMatrix> features) {
    if (features.empty()) throw DataError("PRF: no features");
    event_id = initial.event_id();
    ids = initial.ids();
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) col.emplace(ids[i], static_cast<Eigen::Index>(i));
    for (const auto& f : features) {
      RowMatrixD x = f.gather(ids);
      const Eigen::RowVectorXd mean = x.colwise().mean();
      x.rowwise() -= mean;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double sd = std::sqrt(x.col(j).squaredNorm() / static_cast<double>(x.rows()));
        if (sd > 1e-12) x.col(j) /= sd;
      }
      z.push_back(std::move(x));
    }
  }

  std::vector<Eigen::Index> rows_of(const PseudoLabels& p) const {
    std::vector<Eigen::Index> r;
    for (const auto& id : p.positives) r.push_back(col.at(id));
    for (const auto& id : p.negatives) r.push_back(col.at(id));
    return r;
  }

  std::vector<std::uint32_t> keys() const {
    std::vector<std::uint32_t> k(ids.size());
    std::iota(k.begin(), k.end(), 0u);
    return k;
  }

  RankedList rank(const std::vector<double>& s, const std::string& source) const {
    std::vector<ScoreEntry> e(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) e[i] = {ids[i], s[i]};
    return to_ranked_list(ScoreList(event_id, source, std::move(e)));
  }
};

RowMatrixD take(const RowMatrixD& x, const std::vector<Eigen::Index>& rows) {
  RowMatrixD out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<double> pseudo_targets(const PseudoLabels& p) {
  std::vector<double> y(p.positives.size(), 1.0);
  y.resize(p.positives.size() + p.negatives.size(), -1.0);
  return y;
}

// Average of per-feature z-scored predictions over the whole collection.
std::vector<double> fused_scores(const Collection& c, const std::vector<LinearModel>& models) {
  const auto keys = c.keys();
  std::vector<double> total(c.ids.size(), 0.0);
  for (std::size_t f = 0; f < models.size(); ++f) {
    const Eigen::Map<const Eigen::VectorXd> w(models[f].w.data(), static_cast<Eigen::Index>(models[f].w.size()));
    const Eigen::VectorXd s = (c.z[f] * w).array() + models[f].b;
    const auto n = normalize_vector(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                                    NormMethod::ZScore, keys);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += n[i] / static_cast<double>(models.size());
  }
  return total;
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

LambdaPair schedule(const std::vector<double>& losses, int iteration, SpScheme scheme) {
  const double p1 = iteration == 0 ? 90.0 : 95.0;
  const double p2 = iteration == 0 ? 60.0 : 70.0;
  LambdaPair l{percentile(losses, p1), percentile(losses, p2)};
  l.l2 = std::max(l.l2, 1e-12);
  if (scheme == SpScheme::Binary) l.l1 = std::max(l.l1, 1e-12);
  if (!(l.l1 > l.l2)) l.l1 = l.l2 * (1.0 + 1e-6) + 1e-12;
  return l;
}

}  // namespace

RerankResult spar_rerank(const RankedList& initial, std::span<const FeatureMatrix> features, const PrfConfig& config,
                         std::uint64_t seed) {
  config.validate();
  const Collection c(initial, features);
  RerankResult res;
  res.ranking = initial;
  res.reranked = initial;
  RankedList current = initial;
  const int iterations = std::min(config.iterations, 2);
  for (int it = 0; it < iterations; ++it) {
    RerankIteration rec;
    rec.iteration = it + 1;
    rec.labels = mmprf_init(current, config.k_pos, config.k_neg, seed + static_cast<std::uint64_t>(it));
    const auto rows = c.rows_of(rec.labels);
    const auto y = pseudo_targets(rec.labels);
    std::vector<RowMatrixD> xs;
    for (const auto& z : c.z) xs.push_back(take(z, rows));
    std::vector<double> v(y.size(), 1.0);
    std::vector<LinearModel> models(xs.size());
    std::vector<double> losses(y.size());
    // Each pseudo-class gets its own lambda pair so the weight step cannot
    // empty a whole class.
    auto lambda_of = [&](std::size_t i) -> const LambdaPair& { return y[i] > 0 ? rec.positive_lambdas : rec.lambdas; };
    bool have_lambdas = false;
    auto objective = [&]() {
      double obj = 0.0;
      for (const auto& m : models)
        for (double w : m.w) obj += config.ridge_lambda * w * w;
      for (std::size_t i = 0; i < y.size(); ++i)
        obj += v[i] * losses[i] + spar_regularizer(v[i], lambda_of(i).l1, lambda_of(i).l2, config.scheme);
      return obj;
    };
    for (int round = 0; round < config.inner_rounds; ++round) {
      // Model step: weighted ridge per feature.
      std::fill(losses.begin(), losses.end(), 0.0);
      for (std::size_t f = 0; f < xs.size(); ++f) {
        models[f] = ridge_train(xs[f], y, config.ridge_lambda, v);
        for (Eigen::Index i = 0; i < xs[f].rows(); ++i) {
          double s = models[f].b;
          for (Eigen::Index j = 0; j < xs[f].cols(); ++j) s += models[f].w[j] * xs[f](i, j);
          losses[i] += (s - y[i]) * (s - y[i]);
        }
      }
      if (!have_lambdas) {
        if (static_cast<std::size_t>(it) < config.lambdas.size()) {
          rec.lambdas = rec.positive_lambdas = config.lambdas[static_cast<std::size_t>(it)];
        } else {
          std::vector<double> pos, neg;
          for (std::size_t i = 0; i < y.size(); ++i) (y[i] > 0 ? pos : neg).push_back(losses[i]);
          rec.positive_lambdas = schedule(pos, it, config.scheme);
          rec.lambdas = schedule(neg, it, config.scheme);
        }
        have_lambdas = true;
      }
      rec.objective.push_back(objective());
      // Weight step.
      for (std::size_t i = 0; i < y.size(); ++i) {
        const LambdaPair& l = lambda_of(i);
        v[i] = spar_weights(std::span<const double>(&losses[i], 1), l.l1, l.l2, config.scheme)[0];
      }
      for (double cls : {1.0, -1.0}) {
        double mass = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
          if (y[i] == cls) mass += v[i];
        if (mass > 0.0) continue;
        warn("self-paced reranking: every pseudo-" + std::string(cls > 0 ? "positive" : "negative") +
             " got zero weight; keeping that class at weight 1");
        res.degenerate = true;
        for (std::size_t i = 0; i < y.size(); ++i)
          if (y[i] == cls) v[i] = 1.0;
      }
      rec.objective.push_back(objective());
    }
    rec.weights = v;
    // Rank with models fitted under the final weights.
    for (std::size_t f = 0; f < xs.size(); ++f) models[f] = ridge_train(xs[f], y, config.ridge_lambda, v);
    current = c.rank(fused_scores(c, models), "spar");
    res.trace.push_back(std::move(rec));
  }
  res.reranked = current;
  res.ranking = config.blend ? blend_final(initial, current) : current;
  return res;
}

RankedList prf_rerank(const RankedList& initial, std::span<const FeatureMatrix> features, int k_pos, int k_neg,
                      double ridge_lambda, std::uint64_t seed) {
  const Collection c(initial, features);
  const auto labels = mmprf_init(initial, k_pos, k_neg, seed);
  const auto rows = c.rows_of(labels);
  const auto y = pseudo_targets(labels);
  std::vector<LinearModel> models;
  for (const auto& z : c.z) models.push_back(ridge_train(take(z, rows), y, ridge_lambda));
  return c.rank(fused_scores(c, models), "prf");
}

RankedList blend_final(const RankedList& initial, const RankedList& reranked) {
  if (initial.size() != reranked.size()) throw DataError("blend: lists cover different collections");
  auto ids = initial.ids();
  std::sort(ids.begin(), ids.end());
  std::unordered_map<VideoId, std::size_t> col;
  for (std::size_t i = 0; i < ids.size(); ++i) col.emplace(ids[i], i);
  std::vector<std::uint32_t> keys(ids.size());
  std::iota(keys.begin(), keys.end(), 0u);
  std::vector<double> total(ids.size(), 0.0);
  for (const RankedList* l : {&initial, &reranked}) {
    std::vector<double> s(ids.size(), 0.0);
    for (const auto& e : l->entries()) {
      auto it = col.find(e.id);
      if (it == col.end()) throw DataError("blend: lists cover different collections");
      s[it->second] = e.score;
    }
    const auto n = normalize_vector(s, NormMethod::Rank, keys);
    for (std::size_t i = 0; i < n.size(); ++i) total[i] += 0.5 * n[i];
  }
  std::vector<ScoreEntry> e(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) e[i] = {ids[i], total[i]};
  return to_ranked_list(ScoreList(initial.event_id(), "blend", std::move(e)));
}

std::string rerank_trace_jsonl(const std::string& event_id, std::span<const RerankIteration> trace,
                               std::span<const double> map_if_known) {
  std::string out;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& r = trace[t];
    nlohmann::ordered_json j;
    j["event_id"] = event_id;
    j["iteration"] = r.iteration;
    j["lambda1"] = r.lambdas.l1;
    j["lambda2"] = r.lambdas.l2;
    j["positive_lambda1"] = r.positive_lambdas.l1;
    j["positive_lambda2"] = r.positive_lambdas.l2;
    std::vector<std::string> pos, neg;
    for (const auto& id : r.labels.positives) pos.push_back(id.str());
    for (const auto& id : r.labels.negatives) neg.push_back(id.str());
    j["pseudo_positives"] = pos;
    j["pseudo_negatives"] = neg;
    std::vector<int> hist(10, 0);
    for (double v : r.weights) ++hist[std::min<std::size_t>(9, static_cast<std::size_t>(v * 10.0))];
    j["weight_histogram"] = hist;
    j["objective"] = r.objective;
    if (t < map_if_known.size()) j["map"] = map_if_known[t];
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace cbvr
