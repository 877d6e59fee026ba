#include "cbvr/learners.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "cbvr/io.hpp"
#include "cbvr/kernels.hpp"

namespace cbvr {

namespace {

std::vector<double> unit_weights(std::span<const double> w, Eigen::Index n) {
  if (w.empty()) return std::vector<double>(static_cast<std::size_t>(n), 1.0);
  if (static_cast<Eigen::Index>(w.size()) != n) throw DataError("ridge: sample weight count mismatch");
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("ridge: sample weights must be finite and >= 0");
  }
  return {w.begin(), w.end()};
}

struct Centered {
  Eigen::VectorXd x_mean;
  double y_mean = 0.0;
  Eigen::MatrixXd a;  // sqrt(v) * (X - x_mean)
  Eigen::VectorXd z;  // sqrt(v) * (y - y_mean)
};

Centered center(const RowMatrixD& x, std::span<const double> y, std::span<const double> v) {
  const Eigen::Index n = x.rows();
  if (static_cast<Eigen::Index>(y.size()) != n) throw DataError("ridge: label count mismatch");
  double vsum = 0.0;
  for (double w : v) vsum += w;
  if (!(vsum > 0.0)) throw DataError("ridge: all sample weights are zero");
  Centered c;
  c.x_mean = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    c.x_mean += v[i] * x.row(i).transpose();
    c.y_mean += v[i] * y[i];
  }
  c.x_mean /= vsum;
  c.y_mean /= vsum;
  c.a.resize(n, x.cols());
  c.z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = std::sqrt(v[i]);
    c.a.row(i) = s * (x.row(i) - c.x_mean.transpose());
    c.z[i] = s * (y[i] - c.y_mean);
  }
  return c;
}

LinearModel finish(const Eigen::VectorXd& w, const Centered& c, double lambda) {
  LinearModel m;
  m.w.assign(w.data(), w.data() + w.size());
  m.b = c.y_mean - c.x_mean.dot(w);
  m.lambda = lambda;
  return m;
}

[[noreturn]] void singular() {
  throw DataError("ridge: singular system at lambda=0; use lambda > 0");
}

// rcond() estimates through solve(), which silently skips zero pivots, so
// rank is read off the pivoted diagonal instead.
void check_factor(const Eigen::LDLT<Eigen::MatrixXd>& ldlt) {
  if (ldlt.info() != Eigen::Success) singular();
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  if (d.size() > 0 && !(d.minCoeff() > 1e-13 * d.maxCoeff())) singular();
}

}  // namespace

LinearModel ridge_train(const RowMatrixD& x, std::span<const double> y, double lambda,
                        std::span<const double> sample_weights, RidgeSolver solver) {
  if (!(lambda >= 0.0)) throw ConfigError("ridge: lambda must be >= 0");
  const auto v = unit_weights(sample_weights, x.rows());
  const auto c = center(x, y, v);
  const bool dual = solver == RidgeSolver::Dual || (solver == RidgeSolver::Auto && x.rows() < x.cols());
  Eigen::VectorXd w;
  if (dual) {
    Eigen::MatrixXd k = c.a * c.a.transpose();
    k.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
    check_factor(ldlt);
    w = c.a.transpose() * ldlt.solve(c.z);
  } else {
    Eigen::MatrixXd g = c.a.transpose() * c.a;
    g.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    check_factor(ldlt);
    const Eigen::VectorXd rhs = c.a.transpose() * c.z;
    w = ldlt.solve(rhs);
    // One step of iterative refinement keeps the normal-equation residual tight.
    w += ldlt.solve(rhs - g * w);
  }
  return finish(w, c, lambda);
}

RidgePath::RidgePath(const RowMatrixD& x, std::span<const double> y, std::span<const double> sample_weights) {
  const auto v = unit_weights(sample_weights, x.rows());
  const auto c = center(x, y, v);
  x_mean_ = c.x_mean;
  y_mean_ = c.y_mean;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.a.transpose() * c.a);
  eigvecs_ = es.eigenvectors();
  eigvals_ = es.eigenvalues().cwiseMax(0.0);
  proj_rhs_ = eigvecs_.transpose() * (c.a.transpose() * c.z);
}

LinearModel RidgePath::solve(double lambda) const {
  if (!(lambda >= 0.0)) throw ConfigError("ridge: lambda must be >= 0");
  const double scale = std::max(1.0, eigvals_.size() > 0 ? eigvals_.maxCoeff() : 1.0);
  Eigen::VectorXd coef(eigvals_.size());
  for (Eigen::Index i = 0; i < eigvals_.size(); ++i) {
    const double denom = eigvals_[i] + lambda;
    if (denom <= 1e-13 * scale) singular();
    coef[i] = proj_rhs_[i] / denom;
  }
  const Eigen::VectorXd w = eigvecs_ * coef;
  LinearModel m;
  m.w.assign(w.data(), w.data() + w.size());
  m.b = y_mean_ - x_mean_.dot(w);
  m.lambda = lambda;
  return m;
}

double ridge_gradient_norm(const RowMatrixD& x, std::span<const double> y, double lambda,
                           const LinearModel& model, std::span<const double> sample_weights) {
  const auto v = unit_weights(sample_weights, x.rows());
  const Eigen::Map<const Eigen::VectorXd> w(model.w.data(), static_cast<Eigen::Index>(model.w.size()));
  Eigen::VectorXd r = x * w;
  for (Eigen::Index i = 0; i < x.rows(); ++i) r[i] = v[i] * (r[i] + model.b - y[i]);
  Eigen::VectorXd g(w.size() + 1);
  g.head(w.size()) = 2.0 * (x.transpose() * r) + 2.0 * lambda * w;
  g[w.size()] = 2.0 * r.sum();
  return g.norm();
}

KrrModel krr_train(const Eigen::MatrixXd& kernel, std::span<const double> y, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("KRR: lambda must be > 0");
  if (kernel.rows() != kernel.cols()) throw DataError("KRR: kernel matrix must be square");
  if (kernel.rows() != static_cast<Eigen::Index>(y.size())) throw DataError("KRR: label count mismatch");
  const double scale = std::max(1.0, kernel.cwiseAbs().maxCoeff());
  if ((kernel - kernel.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw DataError("KRR: kernel matrix is not symmetric");
  }
  Eigen::MatrixXd k = kernel;
  k.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw DataError("KRR: kernel matrix is not positive semi-definite");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  KrrModel m;
  m.alpha = llt.solve(yv);
  m.alpha += llt.solve(yv - k * m.alpha);
  m.lambda = lambda;
  return m;
}

Eigen::VectorXd krr_predict(const Eigen::MatrixXd& kernel_rows, const KrrModel& model) {
  if (kernel_rows.cols() != model.alpha.size()) throw DataError("KRR: kernel row width mismatch");
  return kernel_rows * model.alpha;
}

double svm_objective(const RowMatrixD& x, std::span<const double> y, double lambda, const LinearModel& m) {
  double hinge = 0.0;
  double sq = m.b * m.b;
  for (double v : m.w) sq += v * v;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = m.b;
    for (Eigen::Index j = 0; j < x.cols(); ++j) s += m.w[j] * x(i, j);
    hinge += std::max(0.0, 1.0 - y[i] * s);
  }
  return 0.5 * lambda * sq + hinge / static_cast<double>(x.rows());
}

SvmResult svm_train_sgd(const RowMatrixD& x, std::span<const double> y, double lambda, int epochs,
                        std::uint64_t seed) {
  if (!(lambda > 0.0)) throw ConfigError("SVM: lambda must be > 0");
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (static_cast<Eigen::Index>(y.size()) != n) throw DataError("SVM: label count mismatch");
  bool pos = false, neg = false;
  for (double v : y) {
    if (v == 1.0) pos = true;
    else if (v == -1.0) neg = true;
    else throw DataError("SVM: labels must be +1/-1");
  }
  if (!pos || !neg) throw DataError("SVM: single-class input");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  // w[d] is the bias on a constant feature.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  const double radius = 1.0 / std::sqrt(lambda);
  SvmResult res;
  std::uint64_t t = 0;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double margin = y[i] * (x.row(i).dot(w.head(d)) + w[d]);
      w *= 1.0 - 1.0 / static_cast<double>(t);
      if (margin < 1.0) {
        w.head(d) += eta * y[i] * x.row(i).transpose();
        w[d] += eta * y[i];
      }
      const double nrm = w.norm();
      if (nrm > radius) w *= radius / nrm;
    }
    res.model.w.assign(w.data(), w.data() + d);
    res.model.b = w[d];
    res.objective.push_back(svm_objective(x, y, lambda, res.model));
  }
  res.model.w.assign(w.data(), w.data() + d);
  res.model.b = w[d];
  res.model.lambda = lambda;
  res.model.classifier = "svm";
  return res;
}

ScoreList predict_scores(const LinearModel& model, const FeatureMatrix& features) {
  if (static_cast<Eigen::Index>(model.w.size()) != features.dim()) {
    throw DataError("predict: model dimension " + std::to_string(model.w.size()) + " != feature dimension " +
                    std::to_string(features.dim()));
  }
  const auto s = kernels::dense_scores(features.values(), model.w, model.b);
  std::vector<ScoreEntry> entries(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) entries[i] = {features.ids()[i], s[i]};
  return ScoreList(model.event_id, model.feature_name + ":" + model.classifier, std::move(entries));
}

ScoreList predict_scores(const LinearModel& model, const CompressedIndex& index) {
  if (static_cast<int>(model.w.size()) != index.dim()) {
    throw DataError("predict: model dimension " + std::to_string(model.w.size()) + " != index dimension " +
                    std::to_string(index.dim()));
  }
  if (index.codec == Codec::PQ) {
    return pq_dot_scores(model.w, model.b, index.pq, PqCodes{index.codes, index.ids}, model.event_id,
                         model.feature_name + ":" + model.classifier);
  }
  auto decoded = index.decode(model.feature_name);
  return predict_scores(model, decoded);
}

Scenario parse_scenario(std::string_view token) {
  if (token == "SQ") return Scenario::SQ;
  if (token == "000Ex") return Scenario::Ex000;
  if (token == "010Ex") return Scenario::Ex010;
  if (token == "100Ex") return Scenario::Ex100;
  throw ConfigError("unknown scenario '" + std::string(token) + "'");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::SQ: return "SQ";
    case Scenario::Ex000: return "000Ex";
    case Scenario::Ex010: return "010Ex";
    case Scenario::Ex100: return "100Ex";
  }
  return "SQ";
}

ClassifierChoice parse_classifier(std::string_view token) {
  if (token == "krr") return ClassifierChoice::Krr;
  if (token == "svm") return ClassifierChoice::Svm;
  if (token == "both") return ClassifierChoice::Both;
  throw ConfigError("unknown classifier '" + std::string(token) + "'");
}

void TrainSpec::validate() const {
  if (scenario == Scenario::SQ || scenario == Scenario::Ex000) {
    throw ConfigError(std::string(to_string(scenario)) + " has no exemplars to train on");
  }
  if (scenario == Scenario::Ex010 && classifier != ClassifierChoice::Krr) {
    throw ConfigError("010Ex requires krr");
  }
  if (positives.empty()) throw DataError("event " + event_id + ": no positive exemplars");
  if (negatives.empty()) throw DataError("event " + event_id + ": no negatives");
  std::set<VideoId> pos(positives.begin(), positives.end());
  for (const auto& id : negatives) {
    if (pos.count(id)) throw DataError("event " + event_id + ": video " + id.str() + " is both positive and negative");
  }
}

std::vector<int> assign_folds(std::span<const std::uint8_t> labels, int folds, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), 0);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if ((labels[i] != 0) == (cls == 1)) rows.push_back(i);
    std::mt19937_64 rng(seed * 2 + static_cast<std::uint64_t>(cls) + 0x51ed2701ull);
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t r = 0; r < rows.size(); ++r) fold[rows[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
  }
  return fold;
}

namespace {

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd inv_sd;

  static Standardizer fit(const RowMatrixD& x) {
    Standardizer s;
    s.mean = x.colwise().mean().transpose();
    s.inv_sd.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean[j]).square().mean();
      s.inv_sd[j] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    }
    return s;
  }
  RowMatrixD apply(const RowMatrixD& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() * inv_sd.transpose().array();
  }
  // Expresses a model fitted on standardized inputs in raw coordinates.
  void to_raw(LinearModel& m) const {
    for (std::size_t j = 0; j < m.w.size(); ++j) {
      m.w[j] *= inv_sd[static_cast<Eigen::Index>(j)];
      m.b -= m.w[j] * mean[static_cast<Eigen::Index>(j)];
    }
  }
};

RowMatrixD select_rows(const RowMatrixD& x, std::span<const Eigen::Index> rows) {
  RowMatrixD out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

double score_row(const LinearModel& m, const RowMatrixD& x, Eigen::Index i) {
  double s = m.b;
  for (Eigen::Index j = 0; j < x.cols(); ++j) s += m.w[j] * x(i, j);
  return s;
}

struct FoldSplit {
  std::vector<Eigen::Index> train, held;
};

std::vector<FoldSplit> make_splits(std::span<const int> fold_of, int folds) {
  std::vector<FoldSplit> s(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    for (int f = 0; f < folds; ++f) {
      (fold_of[i] == f ? s[f].held : s[f].train).push_back(static_cast<Eigen::Index>(i));
    }
  }
  return s;
}

// Out-of-fold ridge scores for every lambda (outer index) via one
// eigendecomposition per fold.
std::vector<std::vector<double>> ridge_oof(const RowMatrixD& x, std::span<const double> y,
                                           const std::vector<FoldSplit>& splits,
                                           std::span<const double> lambdas) {
  std::vector<std::vector<double>> out(lambdas.size(), std::vector<double>(static_cast<std::size_t>(x.rows())));
  for (const auto& sp : splits) {
    const RowMatrixD xtr = select_rows(x, sp.train);
    std::vector<double> ytr(sp.train.size());
    for (std::size_t i = 0; i < sp.train.size(); ++i) ytr[i] = y[sp.train[i]];
    const auto st = Standardizer::fit(xtr);
    const RidgePath path(st.apply(xtr), ytr);
    const RowMatrixD xheld = st.apply(select_rows(x, sp.held));
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      const auto m = path.solve(lambdas[l]);
      for (std::size_t i = 0; i < sp.held.size(); ++i) out[l][sp.held[i]] = score_row(m, xheld, static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

std::vector<std::uint32_t> identity_keys(std::size_t n) {
  std::vector<std::uint32_t> k(n);
  std::iota(k.begin(), k.end(), 0u);
  return k;
}

}  // namespace

std::vector<double> cross_validated_scores(const RowMatrixD& x, std::span<const double> y,
                                           std::span<const int> fold_of, double lambda) {
  const int folds = fold_of.empty() ? 0 : *std::max_element(fold_of.begin(), fold_of.end()) + 1;
  const std::vector<double> lambdas{lambda};
  return ridge_oof(x, y, make_splits(fold_of, folds), lambdas).front();
}

EventTraining train_event(std::span<const FeatureMatrix> features, const TrainSpec& spec,
                          const TrainOptions& options) {
  spec.validate();
  if (features.empty()) throw DataError("train_event: no features");
  if (options.lambdas.empty()) throw ConfigError("train_event: empty lambda grid");
  EventTraining out;
  out.event_id = spec.event_id;
  std::set<VideoId> pos(spec.positives.begin(), spec.positives.end());
  std::set<VideoId> all(pos);
  all.insert(spec.negatives.begin(), spec.negatives.end());
  out.train_ids.assign(all.begin(), all.end());
  out.labels.resize(out.train_ids.size());
  std::vector<double> y(out.train_ids.size());
  for (std::size_t i = 0; i < out.train_ids.size(); ++i) {
    out.labels[i] = pos.count(out.train_ids[i]) ? 1 : 0;
    y[i] = out.labels[i] ? 1.0 : -1.0;
  }
  int folds = options.folds;
  if (static_cast<int>(pos.size()) < folds) {
    folds = static_cast<int>(pos.size());
    warn("event " + spec.event_id + ": only " + std::to_string(pos.size()) + " positives, using " +
         std::to_string(folds) + " folds");
  }
  if (folds < 2) throw DataError("event " + spec.event_id + ": need at least 2 positives for cross-validation");
  out.folds_used = folds;
  const auto fold_of = assign_folds(out.labels, folds, options.seed);
  const auto splits = make_splits(fold_of, folds);
  const auto keys = identity_keys(out.train_ids.size());

  const bool use_krr = spec.classifier != ClassifierChoice::Svm;
  const bool use_svm = spec.classifier != ClassifierChoice::Krr;

  for (const auto& fm : features) {
    const RowMatrixD x = fm.gather(out.train_ids);
    if (use_krr) {
      const auto oof = ridge_oof(x, y, splits, options.lambdas);
      std::size_t best = 0;
      double best_ap = -1.0;
      for (std::size_t l = 0; l < oof.size(); ++l) {
        const double ap = average_precision(oof[l], out.labels, keys);
        if (ap > best_ap) {
          best_ap = ap;
          best = l;
        }
      }
      const auto st = Standardizer::fit(x);
      auto m = ridge_train(st.apply(x), y, options.lambdas[best]);
      st.to_raw(m);
      m.event_id = spec.event_id;
      m.feature_name = fm.name();
      m.classifier = "krr";
      out.runs.push_back({fm.name() + ":krr", std::move(m), oof[best], best_ap});
    }
    if (use_svm) {
      std::vector<double> best_oof;
      double best_ap = -1.0;
      double best_lambda = options.svm_lambdas.front();
      for (double lambda : options.svm_lambdas) {
        std::vector<double> oof(out.train_ids.size());
        for (std::size_t f = 0; f < splits.size(); ++f) {
          const auto& sp = splits[f];
          const RowMatrixD xtr = select_rows(x, sp.train);
          std::vector<double> ytr(sp.train.size());
          for (std::size_t i = 0; i < sp.train.size(); ++i) ytr[i] = y[sp.train[i]];
          const auto st = Standardizer::fit(xtr);
          const auto r = svm_train_sgd(st.apply(xtr), ytr, lambda, options.svm_epochs, options.seed + f);
          const RowMatrixD xheld = st.apply(select_rows(x, sp.held));
          for (std::size_t i = 0; i < sp.held.size(); ++i) oof[sp.held[i]] = score_row(r.model, xheld, static_cast<Eigen::Index>(i));
        }
        const double ap = average_precision(oof, out.labels, keys);
        if (ap > best_ap) {
          best_ap = ap;
          best_lambda = lambda;
          best_oof = std::move(oof);
        }
      }
      const auto st = Standardizer::fit(x);
      auto m = svm_train_sgd(st.apply(x), y, best_lambda, options.svm_epochs, options.seed).model;
      st.to_raw(m);
      m.event_id = spec.event_id;
      m.feature_name = fm.name();
      m.classifier = "svm";
      out.runs.push_back({fm.name() + ":svm", std::move(m), std::move(best_oof), best_ap});
    }
  }
  return out;
}

std::string format_models_jsonl(std::span<const LinearModel> models) {
  std::string out;
  for (const auto& m : models) {
    io::ByteWriter w;
    for (double v : m.w) w.f32(static_cast<float>(v));
    nlohmann::ordered_json j;
    j["event_id"] = m.event_id;
    j["feature_name"] = m.feature_name;
    j["classifier"] = m.classifier;
    j["b"] = m.b;
    j["lambda"] = m.lambda;
    j["w"] = io::base64_encode(w.data());
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<LinearModel> parse_models_jsonl(std::string_view text) {
  std::vector<LinearModel> out;
  for (const auto& line : io::split(text, '\n')) {
    if (io::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      LinearModel m;
      m.event_id = j.at("event_id").get<std::string>();
      m.feature_name = j.at("feature_name").get<std::string>();
      m.classifier = j.value("classifier", std::string("krr"));
      m.b = j.at("b").get<double>();
      m.lambda = j.at("lambda").get<double>();
      const auto raw = io::base64_decode(j.at("w").get<std::string>());
      if (raw.size() % 4 != 0) throw DataError("model w is not a float32 array");
      io::ByteReader r(raw);
      while (r.remaining() > 0) m.w.push_back(r.f32());
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed model line: ") + e.what());
    }
  }
  return out;
}

}  // namespace cbvr
