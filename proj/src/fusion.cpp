#include "cbvr/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "cbvr/learners.hpp"

namespace cbvr {

std::size_t ScoreMatrix::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void ScoreMatrix::validate() const {
  if (static_cast<Eigen::Index>(names.size()) != scores.rows()) throw DataError("score matrix: row name count mismatch");
  if (static_cast<Eigen::Index>(videos.size()) != scores.cols()) throw DataError("score matrix: column count mismatch");
  if (!labels.empty() && labels.size() != videos.size()) throw DataError("score matrix: labels do not cover all columns");
  if (!scores.allFinite()) throw DataError("score matrix: non-finite score");
  for (std::size_t i = 1; i < videos.size(); ++i) {
    if (!(videos[i - 1] < videos[i])) throw DataError("score matrix: columns must be unique ascending ids");
  }
}

ScoreMatrix ScoreMatrix::from_lists(std::span<const ScoreList> lists, const std::set<VideoId>* positives) {
  if (lists.empty()) throw DataError("score matrix: no score lists");
  ScoreMatrix m;
  m.event_id = lists.front().event_id();
  for (const auto& e : lists.front().entries()) m.videos.push_back(e.id);
  std::sort(m.videos.begin(), m.videos.end());
  std::unordered_map<VideoId, Eigen::Index> col;
  for (std::size_t i = 0; i < m.videos.size(); ++i) col.emplace(m.videos[i], static_cast<Eigen::Index>(i));
  m.scores.resize(static_cast<Eigen::Index>(lists.size()), static_cast<Eigen::Index>(m.videos.size()));
  for (std::size_t r = 0; r < lists.size(); ++r) {
    const auto& l = lists[r];
    if (l.event_id() != m.event_id) throw DataError("score matrix: mixed events '" + m.event_id + "' and '" + l.event_id() + "'");
    if (l.size() != m.videos.size()) throw DataError("score matrix: source " + l.source() + " covers a different video set");
    for (const auto& e : l.entries()) {
      auto it = col.find(e.id);
      if (it == col.end()) throw DataError("score matrix: source " + l.source() + " has unexpected video " + e.id.str());
      m.scores(static_cast<Eigen::Index>(r), it->second) = e.score;
    }
    m.names.push_back(l.source());
  }
  if (positives) {
    m.labels.resize(m.videos.size());
    for (std::size_t i = 0; i < m.videos.size(); ++i) m.labels[i] = positives->count(m.videos[i]) ? 1 : 0;
  }
  m.validate();
  return m;
}

ScoreMatrix ScoreMatrix::select_rows(std::span<const int> rows) const {
  ScoreMatrix out;
  out.event_id = event_id;
  out.videos = videos;
  out.labels = labels;
  out.scores.resize(static_cast<Eigen::Index>(rows.size()), cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.scores.row(static_cast<Eigen::Index>(i)) = scores.row(rows[i]);
    out.names.push_back(names[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

std::vector<std::uint32_t> ScoreMatrix::tie_keys() const {
  std::vector<std::uint32_t> k(videos.size());
  std::iota(k.begin(), k.end(), 0u);
  return k;
}

Strategy parse_strategy(std::string_view token) {
  if (token == "average") return Strategy::Average;
  if (token == "single_ap") return Strategy::SingleAp;
  if (token == "loo") return Strategy::Loo;
  if (token == "sgd_ap") return Strategy::SgdAp;
  throw ConfigError("unknown fusion strategy '" + std::string(token) + "'");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Average: return "average";
    case Strategy::SingleAp: return "single_ap";
    case Strategy::Loo: return "loo";
    case Strategy::SgdAp: return "sgd_ap";
  }
  return "average";
}

void MhlfConfig::validate() const {
  if (leaf_size < 1) throw ConfigError("fusion: leaf_size must be >= 1");
  if (max_depth < 0) throw ConfigError("fusion: max_depth must be >= 0");
  if (strategies.empty()) throw ConfigError("fusion: no strategies selected");
  if (sgd.epochs < 0 || sgd.negative_batch < 1 || !(sgd.beta > 0.0)) throw ConfigError("fusion: bad sgd_ap options");
}

ScoreMatrix normalize_rows(const ScoreMatrix& m, NormMethod method) {
  ScoreMatrix out = m;
  const auto keys = m.tie_keys();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.scores.row(r).begin(), m.scores.row(r).end());
    const auto n = normalize_vector(row, method, keys);
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.scores(r, c) = n[static_cast<std::size_t>(c)];
  }
  return out;
}

ScoreMatrix rank_augment(const ScoreMatrix& m) {
  if (m.rows() < 1) throw DataError("rank_augment: empty score matrix");
  const auto ranked = normalize_rows(m, NormMethod::Rank);
  ScoreMatrix out = m;
  out.scores.resize(2 * m.rows(), m.cols());
  out.scores.topRows(m.rows()) = m.scores;
  out.scores.bottomRows(m.rows()) = ranked.scores;
  for (const auto& n : m.names) out.names.push_back(n + ":rank");
  return out;
}

namespace {

void split_node(const RowMatrixD& x, std::vector<int> rows, int leaf_size, int depth, int max_depth,
                std::vector<std::vector<int>>& leaves) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n <= leaf_size || depth >= max_depth) {
    leaves.push_back(std::move(rows));
    return;
  }
  RowMatrixD c(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) c.row(i) = x.row(rows[i]);
  c.rowwise() -= c.colwise().mean();
  // Projections onto the first principal direction are proportional to the
  // top eigenvector of the row Gram matrix.
  const Eigen::MatrixXd g = c * c.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
  const double top = es.eigenvalues()[n - 1];
  if (!(top > 1e-12 * std::max(1.0, g.diagonal().sum()))) {
    leaves.push_back(std::move(rows));
    return;
  }
  Eigen::VectorXd u = es.eigenvectors().col(n - 1);
  Eigen::Index pivot = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    if (std::abs(u[i]) > std::abs(u[pivot]) + 1e-12) pivot = i;
  if (u[pivot] < 0) u = -u;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return u[a] < u[b]; });
  const std::size_t half = static_cast<std::size_t>(n) / 2;
  std::vector<int> left, right;
  for (std::size_t i = 0; i < order.size(); ++i) (i < half ? left : right).push_back(rows[order[i]]);
  std::sort(left.begin(), left.end());
  std::sort(right.begin(), right.end());
  split_node(x, std::move(left), leaf_size, depth + 1, max_depth, leaves);
  split_node(x, std::move(right), leaf_size, depth + 1, max_depth, leaves);
}

RowMatrixD leaf_means(const RowMatrixD& x, const std::vector<std::vector<int>>& members) {
  RowMatrixD out = RowMatrixD::Zero(static_cast<Eigen::Index>(members.size()), x.cols());
  for (std::size_t l = 0; l < members.size(); ++l) {
    for (int r : members[l]) out.row(static_cast<Eigen::Index>(l)) += x.row(r);
    out.row(static_cast<Eigen::Index>(l)) /= static_cast<double>(members[l].size());
  }
  return out;
}

std::vector<double> row_vector(const RowMatrixD& x, Eigen::Index r) {
  return {x.row(r).begin(), x.row(r).end()};
}

std::vector<double> mean_of_rows(const RowMatrixD& x, Eigen::Index skip = -1) {
  std::vector<double> s(static_cast<std::size_t>(x.cols()), 0.0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (r == skip) continue;
    for (Eigen::Index c = 0; c < x.cols(); ++c) s[static_cast<std::size_t>(c)] += x(r, c);
  }
  return s;
}

void normalize_or_uniform(std::vector<double>& w, std::string_view strategy) {
  double sum = 0.0;
  for (double v : w) sum += v;
  if (!(sum > 0.0)) {
    warn("fusion: " + std::string(strategy) + " weights are all zero; using uniform weights");
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return;
  }
  for (double& v : w) v /= sum;
}

// Euclidean projection onto the probability simplex.
void project_simplex(std::vector<double>& w) {
  std::vector<double> u = w;
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  for (double& v : w) v = std::max(0.0, v - theta);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Smoothed AP over the positives and the given negative columns; also
// returns d(AP)/d(score) per column when `coef` is non-null.
double smoothed_ap_cols(const std::vector<double>& s, const std::vector<int>& pos, const std::vector<int>& neg,
                        double beta, std::vector<double>* coef) {
  double total = 0.0;
  const double np = static_cast<double>(pos.size());
  for (int i : pos) {
    double num = 1.0, den = 1.0;
    for (int j : pos)
      if (j != i) num += sigmoid(beta * (s[j] - s[i]));
    den = num;
    for (int j : neg) den += sigmoid(beta * (s[j] - s[i]));
    total += num / den;
    if (!coef) continue;
    // d(num/den) = (dnum * den - num * dden) / den^2; positives feed both.
    const double inv = 1.0 / (den * den * np);
    for (int j : pos) {
      if (j == i) continue;
      const double a = sigmoid(beta * (s[j] - s[i]));
      const double d = beta * a * (1.0 - a) * (den - num) * inv;
      (*coef)[j] += d;
      (*coef)[i] -= d;
    }
    for (int j : neg) {
      const double a = sigmoid(beta * (s[j] - s[i]));
      const double d = -beta * a * (1.0 - a) * num * inv;
      (*coef)[j] += d;
      (*coef)[i] -= d;
    }
  }
  return total / np;
}

void require_labels(const ScoreMatrix& m) {
  if (!m.has_labels()) throw DataError("fusion: held-out matrix has no labels");
  if (m.positives() == 0) throw DataError("fusion: held-out labels contain no positives");
}

}  // namespace

EssentialFeatures pca_tree_cluster(const ScoreMatrix& m, int leaf_size, int max_depth) {
  if (leaf_size < 1) throw ConfigError("pca_tree_cluster: leaf_size must be >= 1");
  EssentialFeatures out;
  if (m.rows() == 0) return out;
  std::vector<int> all(static_cast<std::size_t>(m.rows()));
  std::iota(all.begin(), all.end(), 0);
  split_node(m.scores, std::move(all), leaf_size, 0, max_depth, out.members);
  out.matrix.event_id = m.event_id;
  out.matrix.videos = m.videos;
  out.matrix.labels = m.labels;
  out.matrix.scores = leaf_means(m.scores, out.members);
  for (std::size_t l = 0; l < out.members.size(); ++l) out.matrix.names.push_back("essential:" + std::to_string(l));
  return out;
}

double smoothed_ap(const ScoreMatrix& m, std::span<const double> weights, double beta) {
  require_labels(m);
  std::vector<double> s(static_cast<std::size_t>(m.cols()), 0.0);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) s[static_cast<std::size_t>(c)] += weights[r] * m.scores(r, c);
  std::vector<int> pos, neg;
  for (std::size_t c = 0; c < m.labels.size(); ++c) (m.labels[c] ? pos : neg).push_back(static_cast<int>(c));
  return smoothed_ap_cols(s, pos, neg, beta, nullptr);
}

FusionWeights strategy_weights(const ScoreMatrix& m, Strategy strategy, std::uint64_t seed, const SgdApOptions& sgd) {
  require_labels(m);
  if (m.rows() < 1) throw DataError("fusion: empty score matrix");
  const auto keys = m.tie_keys();
  const auto nr = static_cast<std::size_t>(m.rows());
  FusionWeights fw;
  fw.strategy = std::string(to_string(strategy));
  fw.weights.assign(nr, 1.0);
  switch (strategy) {
    case Strategy::Average:
      break;
    case Strategy::SingleAp:
      for (std::size_t r = 0; r < nr; ++r)
        fw.weights[r] = average_precision(row_vector(m.scores, static_cast<Eigen::Index>(r)), m.labels, keys);
      break;
    case Strategy::Loo: {
      const double all = average_precision(mean_of_rows(m.scores), m.labels, keys);
      for (std::size_t r = 0; r < nr; ++r) {
        if (nr == 1) break;
        const double without = average_precision(mean_of_rows(m.scores, static_cast<Eigen::Index>(r)), m.labels, keys);
        fw.weights[r] = std::max(0.0, all - without);
      }
      break;
    }
    case Strategy::SgdAp: {
      std::vector<int> pos, neg;
      for (std::size_t c = 0; c < m.labels.size(); ++c) (m.labels[c] ? pos : neg).push_back(static_cast<int>(c));
      std::vector<double>& w = fw.weights;
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(nr));
      std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
      std::vector<int> batch;
      std::vector<double> s(static_cast<std::size_t>(m.cols()));
      std::vector<double> coef(static_cast<std::size_t>(m.cols()));
      for (int e = 0; e < sgd.epochs; ++e) {
        if (static_cast<int>(neg.size()) <= sgd.negative_batch) {
          batch = neg;
        } else {
          batch.clear();
          std::sample(neg.begin(), neg.end(), std::back_inserter(batch), sgd.negative_batch, rng);
        }
        std::fill(s.begin(), s.end(), 0.0);
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c) s[static_cast<std::size_t>(c)] += w[r] * m.scores(r, c);
        std::fill(coef.begin(), coef.end(), 0.0);
        smoothed_ap_cols(s, pos, batch, sgd.beta, &coef);
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          double g = 0.0;
          for (Eigen::Index c = 0; c < m.cols(); ++c) g += coef[static_cast<std::size_t>(c)] * m.scores(r, c);
          w[r] += sgd.learning_rate * g;
        }
        project_simplex(w);
      }
      break;
    }
  }
  normalize_or_uniform(fw.weights, fw.strategy);
  return fw;
}

namespace {

void check_pair(const ScoreMatrix& train, const ScoreMatrix& test) {
  train.validate();
  test.validate();
  require_labels(train);
  if (train.names != test.names) throw DataError("fusion: held-out and test matrices list different sources");
}

RankedList rank_columns(const ScoreMatrix& test, const std::vector<double>& fused, const std::string& source) {
  std::vector<ScoreEntry> entries(test.videos.size());
  for (std::size_t c = 0; c < entries.size(); ++c) entries[c] = {test.videos[c], fused[c]};
  return to_ranked_list(ScoreList(test.event_id, source, std::move(entries)));
}

}  // namespace

FusionResult mhlf_fuse(const ScoreMatrix& train_in, const ScoreMatrix& test_in, const MhlfConfig& config) {
  config.validate();
  check_pair(train_in, test_in);
  FusionResult res;
  auto& rep = res.report;
  rep.event_id = test_in.event_id;
  rep.input_rows = train_in.names;

  ScoreMatrix train = normalize_rows(train_in, config.normalization);
  ScoreMatrix test = normalize_rows(test_in, config.normalization);
  if (config.dedup) {
    std::vector<int> keep;
    for (Eigen::Index r = 0; r < train.rows(); ++r) {
      bool dup = false;
      for (int k : keep) {
        if (train.scores.row(r) == train.scores.row(k) && test.scores.row(r) == test.scores.row(k)) {
          dup = true;
          break;
        }
      }
      if (!dup) keep.push_back(static_cast<int>(r));
    }
    train = train.select_rows(keep);
    test = test.select_rows(keep);
  }
  rep.kept_rows = train.names;
  const Eigen::Index originals = train.rows();
  if (config.rank_augment) {
    train = rank_augment(train);
    test = rank_augment(test);
  }
  rep.augmented_rows = train.names;

  ScoreMatrix train_all = train;
  ScoreMatrix test_all = test;
  if (config.cluster) {
    std::vector<int> pool(static_cast<std::size_t>(config.cluster_rank_rows ? train.rows() : originals));
    std::iota(pool.begin(), pool.end(), 0);
    const auto ess = pca_tree_cluster(train.select_rows(pool), config.leaf_size, config.max_depth);
    const RowMatrixD test_ess = leaf_means(test.select_rows(pool).scores, ess.members);
    const Eigen::Index base = train.rows();
    const Eigen::Index extra = ess.matrix.rows();
    train_all.scores.conservativeResize(base + extra, Eigen::NoChange);
    test_all.scores.conservativeResize(base + extra, Eigen::NoChange);
    train_all.scores.bottomRows(extra) = ess.matrix.scores;
    test_all.scores.bottomRows(extra) = test_ess;
    for (const auto& n : ess.matrix.names) {
      train_all.names.push_back(n);
      test_all.names.push_back(n);
    }
    rep.essential_rows = ess.matrix.names;
  }

  const auto nr = static_cast<std::size_t>(train_all.rows());
  rep.final_weights.assign(nr, 0.0);
  for (Strategy s : config.strategies) {
    const auto fw = strategy_weights(train_all, s, config.seed, config.sgd);
    for (std::size_t r = 0; r < nr; ++r) rep.final_weights[r] += fw.weights[r] / static_cast<double>(config.strategies.size());
    rep.strategy_weights[fw.strategy] = fw.weights;
  }
  std::vector<double> fused(static_cast<std::size_t>(test_all.cols()), 0.0);
  for (Eigen::Index r = 0; r < test_all.rows(); ++r)
    for (Eigen::Index c = 0; c < test_all.cols(); ++c)
      fused[static_cast<std::size_t>(c)] += rep.final_weights[r] * test_all.scores(r, c);
  res.ranking = rank_columns(test_all, fused, "mhlf");
  return res;
}

BaselineMethod parse_baseline(std::string_view token) {
  if (token == "average") return BaselineMethod::Average;
  if (token == "linreg") return BaselineMethod::LinReg;
  throw ConfigError("unknown baseline fusion '" + std::string(token) + "'");
}

RankedList baseline_fuse(const ScoreMatrix& train_in, const ScoreMatrix& test_in, BaselineMethod method,
                         NormMethod normalization, std::uint64_t seed) {
  check_pair(train_in, test_in);
  const ScoreMatrix test = normalize_rows(test_in, normalization);
  std::vector<double> w(static_cast<std::size_t>(test.rows()), 1.0 / static_cast<double>(test.rows()));
  std::string source = "average";
  if (method == BaselineMethod::LinReg) {
    source = "linreg";
    const ScoreMatrix train = normalize_rows(train_in, normalization);
    const RowMatrixD x = train.scores.transpose();
    std::vector<double> y(train.labels.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = train.labels[i] ? 1.0 : -1.0;
    const TrainOptions defaults;
    double best_lambda = 1.0;
    const int folds = std::min<int>(3, static_cast<int>(train.positives()));
    if (folds >= 2) {
      const auto fold_of = assign_folds(train.labels, folds, seed);
      const auto keys = train.tie_keys();
      double best_ap = -1.0;
      for (double lambda : defaults.lambdas) {
        const double ap = average_precision(cross_validated_scores(x, y, fold_of, lambda), train.labels, keys);
        if (ap > best_ap) {
          best_ap = ap;
          best_lambda = lambda;
        }
      }
    }
    w = ridge_train(x, y, best_lambda).w;
  }
  std::vector<double> fused(static_cast<std::size_t>(test.cols()), 0.0);
  for (Eigen::Index r = 0; r < test.rows(); ++r)
    for (Eigen::Index c = 0; c < test.cols(); ++c) fused[static_cast<std::size_t>(c)] += w[r] * test.scores(r, c);
  return rank_columns(test, fused, source);
}

std::string fusion_report_json(std::span<const FusionReport> reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["event_id"] = r.event_id;
    j["stages"] = {{"input", r.input_rows},
                   {"kept", r.kept_rows},
                   {"augmented", r.augmented_rows},
                   {"essential", r.essential_rows}};
    nlohmann::ordered_json sw = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.strategy_weights) sw[k] = v;
    j["strategy_weights"] = sw;
    j["final_weights"] = r.final_weights;
    nlohmann::ordered_json ap = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.ap) ap[k] = v;
    j["ap"] = ap;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace cbvr
