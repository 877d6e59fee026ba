#include "cbvr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

#include "cbvr/encoders.hpp"
#include "cbvr/io.hpp"
#include "cbvr/kernels.hpp"

namespace cbvr {

namespace {

using Params = std::map<std::string, std::string>;
using ojson = nlohmann::ordered_json;

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long r = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(r);
  } catch (const std::exception&) {
    throw ConfigError(key + " expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long r = std::stoull(v, &used);
    if (used != v.size() || (!v.empty() && v[0] == '-')) throw std::invalid_argument("bad");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + " expects an unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError(key + " expects a boolean, got '" + v + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& t : io::split(v, ',')) out.push_back(parse_double(key, std::string(io::trim(t))));
  return out;
}

template <class T>
std::string join_list(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

std::string norm_name(NormMethod m) {
  switch (m) {
    case NormMethod::ZScore: return "zscore";
    case NormMethod::MinMax: return "minmax";
    case NormMethod::Rank: return "rank";
  }
  return "zscore";
}

std::string model_name(RetrievalModel m) {
  switch (m) {
    case RetrievalModel::Vsm: return "vsm";
    case RetrievalModel::Tfidf: return "tfidf";
    case RetrievalModel::Bm25: return "bm25";
    case RetrievalModel::Lm: return "lm";
  }
  return "bm25";
}

std::string classifier_name(ClassifierChoice c) {
  switch (c) {
    case ClassifierChoice::Krr: return "krr";
    case ClassifierChoice::Svm: return "svm";
    case ClassifierChoice::Both: return "both";
  }
  return "both";
}

// Runs fn(i) for i in [0, n) across OpenMP workers; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(cbvr_parallel_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace

bool RunOptions::set(const std::string& key, const std::string& v) {
  if (key == "classifier") classifier_100 = parse_classifier(v);
  else if (key == "folds") train.folds = parse_int(key, v);
  else if (key == "svm_epochs") train.svm_epochs = parse_int(key, v);
  else if (key == "lambdas") train.lambdas = parse_doubles(key, v);
  else if (key == "svm_lambdas") train.svm_lambdas = parse_doubles(key, v);
  else if (key == "leaf_size") mhlf.leaf_size = parse_int(key, v);
  else if (key == "max_depth") mhlf.max_depth = parse_int(key, v);
  else if (key == "strategies") {
    mhlf.strategies.clear();
    for (const auto& t : io::split(v, ',')) mhlf.strategies.push_back(parse_strategy(io::trim(t)));
  } else if (key == "normalization") mhlf.normalization = parse_norm_method(v);
  else if (key == "rank_augment") mhlf.rank_augment = parse_bool(key, v);
  else if (key == "cluster") mhlf.cluster = parse_bool(key, v);
  else if (key == "cluster_rank_rows") mhlf.cluster_rank_rows = parse_bool(key, v);
  else if (key == "dedup") mhlf.dedup = parse_bool(key, v);
  else if (key == "k_pos") prf.k_pos = parse_int(key, v);
  else if (key == "k_neg") prf.k_neg = parse_int(key, v);
  else if (key == "iterations") prf.iterations = parse_int(key, v);
  else if (key == "scheme") prf.scheme = parse_sp_scheme(v);
  else if (key == "blend") {
    if (v != "average" && v != "none") throw ConfigError("blend expects 'average' or 'none'");
    prf.blend = v == "average";
  } else if (key == "prf_ridge_lambda") prf.ridge_lambda = parse_double(key, v);
  else if (key == "prf_010") prf_010 = parse_bool(key, v);
  else if (key == "retrieval") retrieval = parse_retrieval_model(v);
  else if (key == "tau") tau = parse_double(key, v);
  else if (key == "exemplars_010") exemplars_010 = parse_int(key, v);
  else if (key == "seed") seed = parse_u64(key, v);
  else return false;
  return true;
}

std::map<std::string, std::string> RunOptions::to_map() const {
  const std::function<std::string(const double&)> d = [](const double& x) { return fmt17(x); };
  const std::function<std::string(const Strategy&)> s = [](const Strategy& x) { return std::string(to_string(x)); };
  return {{"classifier", classifier_name(classifier_100)},
          {"folds", std::to_string(train.folds)},
          {"svm_epochs", std::to_string(train.svm_epochs)},
          {"lambdas", join_list(train.lambdas, d)},
          {"svm_lambdas", join_list(train.svm_lambdas, d)},
          {"leaf_size", std::to_string(mhlf.leaf_size)},
          {"max_depth", std::to_string(mhlf.max_depth)},
          {"strategies", join_list(mhlf.strategies, s)},
          {"normalization", norm_name(mhlf.normalization)},
          {"rank_augment", mhlf.rank_augment ? "1" : "0"},
          {"cluster", mhlf.cluster ? "1" : "0"},
          {"cluster_rank_rows", mhlf.cluster_rank_rows ? "1" : "0"},
          {"dedup", mhlf.dedup ? "1" : "0"},
          {"k_pos", std::to_string(prf.k_pos)},
          {"k_neg", std::to_string(prf.k_neg)},
          {"iterations", std::to_string(prf.iterations)},
          {"scheme", prf.scheme == SpScheme::Mixture ? "mixture" : "binary"},
          {"blend", prf.blend ? "average" : "none"},
          {"prf_ridge_lambda", fmt17(prf.ridge_lambda)},
          {"prf_010", prf_010 ? "1" : "0"},
          {"retrieval", model_name(retrieval)},
          {"tau", fmt17(tau)},
          {"exemplars_010", std::to_string(exemplars_010)},
          {"seed", std::to_string(seed)}};
}

FeatureMatrix subset(const FeatureMatrix& fm, std::span<const VideoId> ids) {
  RowMatrixF v(static_cast<Eigen::Index>(ids.size()), fm.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = fm.values().row(fm.row(ids[i]));
  return FeatureMatrix(fm.name(), {ids.begin(), ids.end()}, std::move(v));
}

RankedList semantic_search(const Dataset& ds, const std::string& event_id, const RunOptions& options) {
  auto it = ds.queries.find(event_id);
  if (it == ds.queries.end()) throw DataError("no semantic query for event " + event_id);
  const auto q = sqg_map(it->second, ds.similarity, ds.vocab, options.tau);
  const auto lists = retrieve(q, ds.docs, options.retrieval, event_id);
  return modality_fuse(lists, q.modality_weights());
}

namespace {

struct TrainingSet {
  std::vector<VideoId> positives;
  std::vector<VideoId> negatives;
};

TrainingSet training_set(const Dataset& ds, const std::string& event_id, Scenario scenario, const RunOptions& options) {
  TrainingSet t;
  t.positives = ds.gt.exemplars(event_id);
  std::sort(t.positives.begin(), t.positives.end());
  if (scenario == Scenario::Ex010) {
    if (static_cast<int>(t.positives.size()) < options.exemplars_010) {
      throw DataError("insufficient exemplars for event " + event_id + ": have " + std::to_string(t.positives.size()) +
                      ", need " + std::to_string(options.exemplars_010));
    }
    t.positives.resize(static_cast<std::size_t>(options.exemplars_010));
  }
  t.negatives = ds.background_ids();
  return t;
}

ScoreMatrix heldout_matrix(const EventTraining& tr) {
  ScoreMatrix m;
  m.event_id = tr.event_id;
  m.videos = tr.train_ids;
  m.labels = tr.labels;
  m.scores.resize(static_cast<Eigen::Index>(tr.runs.size()), static_cast<Eigen::Index>(tr.train_ids.size()));
  for (std::size_t r = 0; r < tr.runs.size(); ++r) {
    m.names.push_back(tr.runs[r].name);
    for (std::size_t c = 0; c < tr.train_ids.size(); ++c) m.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = tr.runs[r].heldout[c];
  }
  m.validate();
  return m;
}

using Scorer = std::function<ScoreList(const LinearModel&)>;

ScoreMatrix test_matrix(const EventTraining& tr, const Scorer& scorer) {
  std::vector<ScoreList> lists;
  for (const auto& run : tr.runs) lists.push_back(scorer(run.model));
  return ScoreMatrix::from_lists(lists);
}

const FeatureMatrix& find_feature(std::span<const FeatureMatrix> fs, const std::string& name) {
  for (const auto& f : fs)
    if (f.name() == name) return f;
  throw DataError("no feature named '" + name + "'");
}

EventTraining train_sources(const Dataset& ds, std::span<const FeatureMatrix> train_features,
                            const std::string& event_id, Scenario scenario, const RunOptions& options) {
  const auto ts = training_set(ds, event_id, scenario, options);
  TrainSpec spec;
  spec.event_id = event_id;
  spec.positives = ts.positives;
  spec.negatives = ts.negatives;
  spec.scenario = scenario;
  spec.classifier = scenario == Scenario::Ex010 ? ClassifierChoice::Krr : options.classifier_100;
  TrainOptions to = options.train;
  to.seed = derive_seed(options.seed, "train:" + event_id);
  return train_event(train_features, spec, to);
}

}  // namespace

TrainedEvent train_and_score(const Dataset& ds, std::span<const FeatureMatrix> train_features,
                             std::span<const FeatureMatrix> test_features, const std::string& event_id,
                             Scenario scenario, const RunOptions& options) {
  TrainedEvent te;
  te.training = train_sources(ds, train_features, event_id, scenario, options);
  te.heldout = heldout_matrix(te.training);
  te.test = test_matrix(te.training, [&](const LinearModel& m) {
    return predict_scores(m, find_feature(test_features, m.feature_name));
  });
  return te;
}

ScenarioResult run_scenario(const Dataset& ds, Scenario scenario, const RunOptions& options) {
  const std::size_t reads_before = ds.gt.evaluation_reads();
  ScenarioResult res;
  res.scenario = scenario;
  const auto test_ids = ds.test_ids();
  std::vector<FeatureMatrix> test_features;
  for (const auto& f : ds.features) test_features.push_back(subset(f, test_ids));
  res.events.resize(ds.events.size());
  parallel_for(ds.events.size(), [&](std::size_t i) {
    const auto& event = ds.events[i];
    EventRun& run = res.events[i];
    run.event_id = event;
    const std::uint64_t seed = derive_seed(options.seed, "event:" + event);
    switch (scenario) {
      case Scenario::SQ:
        run.ranking = semantic_search(ds, event, options);
        break;
      case Scenario::Ex000: {
        const auto initial = semantic_search(ds, event, options);
        const auto rr = spar_rerank(initial, test_features, options.prf, seed);
        run.ranking = rr.ranking;
        run.rerank_trace = rerank_trace_jsonl(event, rr.trace);
        break;
      }
      case Scenario::Ex010:
      case Scenario::Ex100: {
        const auto te = train_and_score(ds, ds.features, test_features, event, scenario, options);
        MhlfConfig mc = options.mhlf;
        mc.seed = seed;
        auto fused = mhlf_fuse(te.heldout, te.test, mc);
        run.ranking = fused.ranking;
        run.fusion = std::move(fused.report);
        if (scenario == Scenario::Ex010 && options.prf_010) {
          const auto rr = spar_rerank(run.ranking, test_features, options.prf, seed);
          run.ranking = rr.ranking;
          run.rerank_trace = rerank_trace_jsonl(event, rr.trace);
        }
        break;
      }
    }
  });
  if (ds.gt.evaluation_reads() != reads_before) {
    throw InternalError("leakage guard: test labels were read before evaluation");
  }
  double total = 0.0;
  for (auto& run : res.events) {
    const double ap = average_precision(run.ranking, ds.gt.evaluation_positives(run.event_id, Split::Test));
    res.ap[run.event_id] = ap;
    run.fusion.ap["test"] = ap;
    total += ap;
  }
  res.map = res.events.empty() ? 0.0 : total / static_cast<double>(res.events.size());
  return res;
}

std::vector<EnsembleEvent> ensemble_from_dataset(const Dataset& ds, const RunOptions& options) {
  const auto test_ids = ds.test_ids();
  std::vector<FeatureMatrix> test_features;
  for (const auto& f : ds.features) test_features.push_back(subset(f, test_ids));
  std::vector<EnsembleEvent> out(ds.events.size());
  parallel_for(ds.events.size(), [&](std::size_t i) {
    auto te = train_and_score(ds, ds.features, test_features, ds.events[i], Scenario::Ex010, options);
    out[i].heldout = std::move(te.heldout);
    out[i].test = std::move(te.test);
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].test_positives = ds.gt.evaluation_positives(ds.events[i], Split::Test);
  return out;
}

double fused_map(const std::vector<EnsembleEvent>& events, const std::string& method, const MhlfConfig& mhlf,
                 std::uint64_t seed, std::span<const int> rows) {
  if (events.empty()) throw DataError("fused_map: no events");
  double total = 0.0;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& ev = events[e];
    const ScoreMatrix h = rows.empty() ? ev.heldout : ev.heldout.select_rows(rows);
    const ScoreMatrix t = rows.empty() ? ev.test : ev.test.select_rows(rows);
    RankedList ranking;
    if (method == "mhlf") {
      MhlfConfig mc = mhlf;
      mc.seed = derive_seed(seed, "mhlf", e);
      ranking = mhlf_fuse(h, t, mc).ranking;
    } else {
      ranking = baseline_fuse(h, t, parse_baseline(method), mhlf.normalization, derive_seed(seed, "linreg", e));
    }
    total += average_precision(ranking, ev.test_positives);
  }
  return total / static_cast<double>(events.size());
}

std::vector<RobustnessRow> robustness_experiment(const std::vector<EnsembleEvent>& events,
                                                 const RobustnessOptions& options) {
  if (events.empty()) throw DataError("robustness: no events");
  if (options.trials < 1) throw ConfigError("robustness: trials must be >= 1");
  const int nrows = static_cast<int>(events.front().heldout.rows());
  if (nrows < 2) throw DataError("robustness: need at least 2 features");
  static const std::vector<std::string> methods{"mhlf", "average", "linreg"};
  std::vector<RobustnessRow> out;
  for (std::size_t fi = 0; fi < options.fractions.size(); ++fi) {
    const double frac = options.fractions[fi];
    if (!(frac > 0.0 && frac <= 1.0)) throw ConfigError("robustness: fractions must be in (0,1]");
    const int nsel = static_cast<int>(std::ceil(frac * nrows - 1e-9));
    if (nsel < 2) {
      warn("robustness: fraction " + fmt9(frac) + " keeps fewer than 2 features; skipped");
      continue;
    }
    // Without sampling every trial is identical; compute it once.
    const int distinct = nsel == nrows ? 1 : options.trials;
    std::vector<std::array<double, 3>> results(static_cast<std::size_t>(distinct));
    parallel_for(static_cast<std::size_t>(distinct), [&](std::size_t t) {
      std::vector<int> all(static_cast<std::size_t>(nrows));
      std::iota(all.begin(), all.end(), 0);
      std::vector<int> rows;
      if (nsel == nrows) {
        rows = all;
      } else {
        std::mt19937_64 rng(derive_seed(options.seed, "subset", fi * 100000 + t));
        std::sample(all.begin(), all.end(), std::back_inserter(rows), nsel, rng);
      }
      const std::uint64_t s = derive_seed(options.seed, "trial", fi * 100000 + t);
      for (std::size_t m = 0; m < methods.size(); ++m) results[t][m] = fused_map(events, methods[m], options.mhlf, s, rows);
    });
    for (std::size_t m = 0; m < methods.size(); ++m) {
      std::vector<double> v;
      for (int t = 0; t < options.trials; ++t) v.push_back(results[static_cast<std::size_t>(t % distinct)][m]);
      // Offsets from the first trial keep identical trials at exactly zero spread.
      double shift = 0.0;
      for (double x : v) shift += x - v[0];
      const double mean = v[0] + shift / static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
      const double half = 1.96 * sd / std::sqrt(static_cast<double>(v.size()));
      out.push_back({frac, nsel, methods[m], options.trials, mean, mean - half, mean + half});
    }
  }
  return out;
}

std::string format_robustness_csv(const std::vector<RobustnessRow>& rows) {
  std::string out = "fraction,n_features,method,trials,mean_map,ci_low,ci_high\n";
  for (const auto& r : rows) {
    out += fmt9(r.fraction) + "," + std::to_string(r.n_features) + "," + r.method + "," + std::to_string(r.trials) + "," +
           fmt9(r.mean) + "," + fmt9(r.ci_low) + "," + fmt9(r.ci_high) + "\n";
  }
  return out;
}

std::vector<DegradationRow> degradation_experiment(const Dataset& ds, const DegradationOptions& options) {
  options.efm.validate();
  const auto test_ids = ds.test_ids();
  const std::size_t nf = ds.features.size();
  const std::size_t ne = ds.events.size();

  // Feature representations: raw, and EFM on histogram features.
  std::vector<FeatureMatrix> raw_test, efm_all, efm_test;
  for (std::size_t f = 0; f < nf; ++f) {
    raw_test.push_back(subset(ds.features[f], test_ids));
    efm_all.push_back(ds.kinds[f] == "bow" ? efm_map(ds.features[f], options.efm) : ds.features[f]);
  }
  for (const auto& f : efm_all) efm_test.push_back(subset(f, test_ids));

  struct Rep {
    std::vector<EventTraining> training;
    std::vector<ScoreMatrix> heldout;
  };
  auto train_rep = [&](std::span<const FeatureMatrix> all) {
    Rep rep;
    rep.training.resize(ne);
    rep.heldout.resize(ne);
    parallel_for(ne, [&](std::size_t e) {
      rep.training[e] = train_sources(ds, all, ds.events[e], Scenario::Ex100, options.run);
      rep.heldout[e] = heldout_matrix(rep.training[e]);
    });
    return rep;
  };
  bool need_efm = false;
  for (const auto& v : options.variants) need_efm |= v.rfind("efm", 0) == 0;
  const Rep raw = train_rep(ds.features);
  Rep efm;
  if (need_efm) efm = train_rep(efm_all);

  // Per-feature compressed indexes, built once per (representation, codec, parameter).
  std::map<std::string, std::vector<CompressedIndex>> indexes;
  auto pq_indexes = [&](const std::vector<FeatureMatrix>& test, const std::string& tag, int d_sub) -> const std::vector<CompressedIndex>& {
    const std::string key = tag + ":pq:" + std::to_string(d_sub);
    auto it = indexes.find(key);
    if (it != indexes.end()) return it->second;
    std::vector<CompressedIndex> out(test.size());
    parallel_for(test.size(), [&](std::size_t f) {
      PqOptions po;
      po.d_sub = d_sub;
      po.k = options.pq_k;
      po.max_iter = options.pq_max_iter;
      po.train_sample = options.pq_train_sample;
      po.pad = true;
      po.seed = derive_seed(options.run.seed, key, f);
      auto cb = pq_train(test[f], po);
      auto codes = pq_encode(cb, test[f]);
      out[f] = make_pq_index(std::move(cb), std::move(codes));
    });
    return indexes.emplace(key, std::move(out)).first->second;
  };
  auto uq_indexes = [&](const std::vector<FeatureMatrix>& test, const std::string& tag, int k) -> const std::vector<CompressedIndex>& {
    const std::string key = tag + ":uq:" + std::to_string(k);
    auto it = indexes.find(key);
    if (it != indexes.end()) return it->second;
    std::vector<CompressedIndex> out(test.size());
    parallel_for(test.size(), [&](std::size_t f) {
      auto model = uq_train(test[f], k, options.uq_mode);
      auto codes = uq_encode(model, test[f]);
      out[f] = make_uq_index(std::move(model), std::move(codes), test[f].ids());
    });
    return indexes.emplace(key, std::move(out)).first->second;
  };

  auto evaluate = [&](const Rep& rep, const std::function<ScoreList(const LinearModel&)>& scorer, double& seconds) {
    std::vector<ScoreMatrix> tests(ne);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t e = 0; e < ne; ++e) tests[e] = test_matrix(rep.training[e], scorer);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<double> ap(ne);
    parallel_for(ne, [&](std::size_t e) {
      MhlfConfig mc = options.run.mhlf;
      mc.seed = derive_seed(options.run.seed, "event:" + ds.events[e]);
      ap[e] = average_precision(mhlf_fuse(rep.heldout[e], tests[e], mc).ranking,
                                ds.gt.evaluation_positives(ds.events[e], Split::Test));
    });
    return std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ne);
  };
  auto index_of = [](const std::vector<FeatureMatrix>& fs, const std::string& name) {
    for (std::size_t f = 0; f < fs.size(); ++f)
      if (fs[f].name() == name) return f;
    throw DataError("no feature named '" + name + "'");
  };

  auto run_variant = [&](const std::string& variant, const std::string& codec, int param) {
    const bool use_efm = variant.rfind("efm", 0) == 0;
    const Rep& rep = use_efm ? efm : raw;
    const auto& test = use_efm ? efm_test : raw_test;
    DegradationRow row;
    row.variant = variant;
    row.codec = codec;
    if (codec == "dense") {
      row.map = evaluate(rep, [&](const LinearModel& m) { return predict_scores(m, test[index_of(test, m.feature_name)]); },
                         row.score_seconds);
    } else if (codec == "pq") {
      const auto& idx = pq_indexes(test, use_efm ? "efm" : "raw", param);
      row.ratio = 4.0 * param;
      row.map = evaluate(rep, [&](const LinearModel& m) { return predict_scores(m, idx[index_of(test, m.feature_name)]); },
                         row.score_seconds);
    } else {
      const auto& idx = uq_indexes(test, use_efm ? "efm" : "raw", param);
      row.ratio = 32.0 / std::log2(static_cast<double>(param));
      row.map = evaluate(rep, [&](const LinearModel& m) { return predict_scores(m, idx[index_of(test, m.feature_name)]); },
                         row.score_seconds);
    }
    return row;
  };

  std::vector<DegradationRow> rows;
  for (const auto& v : options.variants) {
    if (v == "exact") rows.push_back(run_variant("exact", "dense", 0));
    else if (v == "efm") rows.push_back(run_variant("efm", "dense", 0));
    else if (v == "pq") rows.push_back(run_variant("pq", "pq", 8));
    else if (v == "efm+pq") rows.push_back(run_variant("efm+pq", "pq", 8));
    else if (v == "uq") rows.push_back(run_variant("uq", "uq", options.uq_default_k));
    else throw ConfigError("degradation: unknown variant '" + v + "'");
  }
  if (options.sweep) {
    for (int d_sub : options.pq_dsub) rows.push_back(run_variant("pq@" + fmt9(4.0 * d_sub) + "x", "pq", d_sub));
    for (int k : options.uq_k) rows.push_back(run_variant("uq@" + fmt9(32.0 / std::log2(double(k))) + "x", "uq", k));
  }
  double exact = 0.0;
  bool have_exact = false;
  for (const auto& r : rows)
    if (r.variant == "exact") {
      exact = r.map;
      have_exact = true;
    }
  if (!have_exact) exact = run_variant("exact", "dense", 0).map;
  for (auto& r : rows) r.rel_delta = exact > 0.0 ? (r.map - exact) / exact : 0.0;
  return rows;
}

std::string format_degradation_csv(const std::vector<DegradationRow>& rows) {
  std::string out = "variant,codec,compression_ratio,map,relative_delta\n";
  for (const auto& r : rows) out += r.variant + "," + r.codec + "," + fmt9(r.ratio) + "," + fmt9(r.map) + "," + fmt9(r.rel_delta) + "\n";
  return out;
}

std::string format_timings_csv(const std::vector<DegradationRow>& rows) {
  std::string out = "variant,score_seconds\n";
  for (const auto& r : rows) out += r.variant + "," + fmt9(r.score_seconds) + "\n";
  return out;
}

std::string format_map_json(const std::map<std::string, double>& ap, double map, const std::string& manifest_hash) {
  ojson j = ojson::object();
  for (const auto& [e, v] : ap) j[e] = v;
  j["map"] = map;
  j["manifest_hash"] = manifest_hash;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string score_matrix_json(const ScoreMatrix& m) {
  ojson j;
  j["event_id"] = m.event_id;
  j["names"] = m.names;
  std::vector<std::string> vids;
  for (const auto& v : m.videos) vids.push_back(v.str());
  j["videos"] = vids;
  if (m.has_labels()) j["labels"] = m.labels;
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.scores.row(r).begin(), m.scores.row(r).end()));
  j["scores"] = rows;
  return j.dump() + "\n";
}

ScoreMatrix read_score_matrix(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    ScoreMatrix m;
    m.event_id = j.at("event_id").get<std::string>();
    m.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& v : j.at("videos")) m.videos.emplace_back(v.get<std::string>());
    if (j.contains("labels")) m.labels = j.at("labels").get<std::vector<std::uint8_t>>();
    const auto& rows = j.at("scores");
    m.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.videos.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto v = rows[r].get<std::vector<double>>();
      if (v.size() != m.videos.size()) throw DataError(path.string() + ": ragged score rows");
      for (std::size_t c = 0; c < v.size(); ++c) m.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[c];
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

struct ParamReader {
  const Params& p;
  std::string command;

  bool has(const std::string& k) const { return p.count(k) != 0; }
  std::string str(const std::string& k, const std::string& def) const {
    auto it = p.find(k);
    return it == p.end() ? def : it->second;
  }
  std::string required(const std::string& k) const {
    auto it = p.find(k);
    if (it == p.end() || it->second.empty()) throw ConfigError(command + ": missing required setting '" + k + "'");
    return it->second;
  }
  int integer(const std::string& k, int def) const { return has(k) ? parse_int(k, p.at(k)) : def; }
  double number(const std::string& k, double def) const { return has(k) ? parse_double(k, p.at(k)) : def; }
  bool flag(const std::string& k, bool def) const { return has(k) ? parse_bool(k, p.at(k)) : def; }
  std::uint64_t seed() const { return has("seed") ? parse_u64("seed", p.at("seed")) : 0; }
};

void check_keys(const std::string& command, const Params& params, const std::set<std::string>& own, bool run_options,
                bool synth_options = false) {
  RunOptions probe;
  SynthConfig sprobe;
  const auto run_keys = probe.to_map();
  const auto synth_keys = sprobe.to_map();
  for (const auto& [k, v] : params) {
    if (k == "seed" || own.count(k)) continue;
    if (run_options && run_keys.count(k)) continue;
    if (synth_options && synth_keys.count(k)) continue;
    throw ConfigError(command + ": unknown setting '" + k + "'");
  }
}

RunOptions run_options_from(const Params& params) {
  RunOptions o;
  for (const auto& [k, v] : params) o.set(k, v);
  return o;
}

Scenario scenario_param(const ParamReader& r) { return parse_scenario(r.required("scenario")); }

void write_out(const std::filesystem::path& out, CommandResult& res, const std::string& rel, std::string_view contents) {
  const auto path = out / rel;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, contents);
  res.outputs.push_back(rel);
}

void write_ranked(const std::filesystem::path& out, CommandResult& res, const RankedList& l) {
  write_out(out, res, "ranked/" + l.event_id() + ".tsv", io::format_scores_tsv(l.entries()));
}

std::vector<std::filesystem::path> files_with_ext(const std::filesystem::path& dir, const std::string& ext) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FeatureMatrix> maybe_efm(const Dataset& ds, bool efm, const HomogeneousMapConfig& cfg) {
  if (!efm) return ds.features;
  std::vector<FeatureMatrix> out;
  for (std::size_t f = 0; f < ds.features.size(); ++f)
    out.push_back(ds.kinds[f] == "bow" ? efm_map(ds.features[f], cfg) : ds.features[f]);
  return out;
}

HomogeneousMapConfig efm_config(const ParamReader& r) {
  HomogeneousMapConfig c;
  c.kernel = parse_additive_kernel(r.str("efm_kernel", "chi2"));
  c.order = r.integer("efm_order", c.order);
  c.period = r.number("efm_period", c.period);
  c.validate();
  return c;
}

CommandResult cmd_gen(const Params& params, const std::filesystem::path& out) {
  check_keys("gen", params, {}, false, true);
  SynthConfig cfg;
  for (const auto& [k, v] : params) cfg.set(k, v);
  const auto ds = synth_generate(cfg);
  write_dataset(out, ds);
  CommandResult res;
  res.outputs = {"synth.cfg", "features.tsv", "ground_truth.csv", "queries.tsv", "semantic/vocab.csv",
                 "semantic/similarity.tsv", "semantic/visual.idx", "semantic/asr.jsonl", "semantic/ocr.jsonl"};
  for (const auto& f : ds.features) res.outputs.push_back("features/" + f.name() + ".fmx");
  return res;
}

CommandResult cmd_encode(const Params& params, const std::filesystem::path& out) {
  check_keys("encode", params, {"descriptors", "method", "k", "pca", "sted", "post", "name", "sample", "max_iter"}, false);
  const ParamReader r{params, "encode"};
  const auto files = files_with_ext(r.required("descriptors"), ".dsc");
  if (files.empty()) throw DataError("encode: no .dsc files in " + r.required("descriptors"));
  std::vector<DescriptorSet> sets;
  for (const auto& f : files) sets.push_back(read_descriptor_set(f));
  const std::string method = r.str("method", "fv");
  const int k = r.integer("k", 16);
  const int p = r.integer("pca", 0);
  const bool sted = r.flag("sted", false);
  const int sample = r.integer("sample", 20000);
  const std::uint64_t seed = r.seed();
  if (method != "bow" && method != "vlad" && method != "fv") throw ConfigError("encode: method must be bow, vlad or fv");

  // Pool a seeded sample of descriptors for the codebook / PCA.
  std::vector<std::pair<std::size_t, Eigen::Index>> refs;
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (Eigen::Index i = 0; i < sets[s].size(); ++i) refs.emplace_back(s, i);
  std::mt19937_64 rng(derive_seed(seed, "encode-sample"));
  if (static_cast<int>(refs.size()) > sample) {
    std::vector<std::pair<std::size_t, Eigen::Index>> picked;
    std::sample(refs.begin(), refs.end(), std::back_inserter(picked), sample, rng);
    refs = std::move(picked);
  }
  RowMatrixD pool(static_cast<Eigen::Index>(refs.size()), sets.front().dim());
  RowMatrixD pool_xy(static_cast<Eigen::Index>(refs.size()), 3);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    pool.row(static_cast<Eigen::Index>(i)) = sets[refs[i].first].descriptors.row(refs[i].second);
    pool_xy.row(static_cast<Eigen::Index>(i)) = sets[refs[i].first].coords.row(refs[i].second);
  }
  std::optional<PcaModel> pca;
  auto transform = [&](const RowMatrixD& d, const RowMatrixD& xy) {
    RowMatrixD x = pca ? pca_project(*pca, d) : d;
    return sted ? sted_augment(x, xy) : x;
  };
  if (p > 0) pca = pca_fit(pool, p);
  const RowMatrixD train = transform(pool, pool_xy);
  std::vector<Eigen::VectorXd> rows;
  if (method == "fv") {
    const auto gmm = gmm_fit(train, k, derive_seed(seed, "gmm"), r.integer("max_iter", 100)).model;
    for (const auto& s : sets) rows.push_back(fv_encode({s.video_id, transform(s.descriptors, s.coords), s.coords}, gmm));
  } else {
    const auto cb = kmeans_fit(train, k, derive_seed(seed, "kmeans"), r.integer("max_iter", 50)).codebook;
    const auto pyramid = default_pyramid();
    for (const auto& s : sets) {
      const DescriptorSet t{s.video_id, transform(s.descriptors, s.coords), s.coords};
      rows.push_back(method == "bow" ? bow_encode(t, cb, pyramid) : vlad_encode(t, cb));
    }
  }
  const auto post = parse_post_norm(r.str("post", method == "vlad" ? "power_l2" : "none"));
  std::vector<VideoId> ids;
  RowMatrixF values(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  std::vector<std::size_t> order(sets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sets[a].video_id < sets[b].video_id; });
  for (std::size_t i = 0; i < order.size(); ++i) {
    ids.push_back(sets[order[i]].video_id);
    values.row(static_cast<Eigen::Index>(i)) = post_normalize(rows[order[i]], post).cast<float>().transpose();
  }
  CommandResult res;
  write_out(out, res, "features.fmx", io::encode_feature_matrix(FeatureMatrix(r.str("name", method), ids, std::move(values))));
  return res;
}

CommandResult cmd_index(const Params& params, const std::filesystem::path& out) {
  check_keys("index", params, {"features", "codec", "d_sub", "pq_k", "uq_k", "uq_mode", "efm", "efm_kernel", "efm_order",
                               "efm_period", "max_iter", "train_sample"}, false);
  const ParamReader r{params, "index"};
  auto fm = io::read_feature_matrix(r.required("features"));
  if (r.flag("efm", false)) fm = efm_map(fm, efm_config(r));
  const std::string codec = r.str("codec", "pq");
  CompressedIndex idx;
  if (codec == "pq") {
    PqOptions po;
    po.d_sub = r.integer("d_sub", 8);
    po.k = r.integer("pq_k", 256);
    po.max_iter = r.integer("max_iter", po.max_iter);
    po.train_sample = r.integer("train_sample", po.train_sample);
    po.pad = true;
    po.seed = derive_seed(r.seed(), "pq");
    auto cb = pq_train(fm, po);
    auto codes = pq_encode(cb, fm);
    idx = make_pq_index(std::move(cb), std::move(codes));
  } else if (codec == "uq") {
    const auto mode = r.str("uq_mode", "minmax");
    if (mode != "minmax" && mode != "quantile") throw ConfigError("index: uq_mode must be minmax or quantile");
    auto model = uq_train(fm, r.integer("uq_k", 256), mode == "quantile" ? UqMode::Quantile : UqMode::MinMax);
    auto codes = uq_encode(model, fm);
    idx = make_uq_index(std::move(model), std::move(codes), fm.ids());
  } else {
    throw ConfigError("index: codec must be pq or uq");
  }
  CommandResult res;
  write_out(out, res, "index.idx", encode_index(idx));
  return res;
}

CommandResult cmd_train(const Params& params, const std::filesystem::path& out) {
  check_keys("train", params, {"data", "scenario", "efm", "efm_kernel", "efm_order", "efm_period"}, true);
  const ParamReader r{params, "train"};
  const auto ds = read_dataset(r.required("data"));
  const auto scenario = scenario_param(r);
  if (scenario != Scenario::Ex010 && scenario != Scenario::Ex100) throw ConfigError("train: scenario must be 010Ex or 100Ex");
  const auto options = run_options_from(params);
  const auto features = maybe_efm(ds, r.flag("efm", false), efm_config(r));
  std::vector<EventTraining> trained(ds.events.size());
  parallel_for(ds.events.size(), [&](std::size_t e) { trained[e] = train_sources(ds, features, ds.events[e], scenario, options); });
  CommandResult res;
  std::vector<LinearModel> models;
  for (const auto& t : trained) {
    for (const auto& run : t.runs) models.push_back(run.model);
    write_out(out, res, "heldout/" + t.event_id + ".json", score_matrix_json(heldout_matrix(t)));
  }
  write_out(out, res, "models.jsonl", format_models_jsonl(models));
  return res;
}

CommandResult cmd_score(const Params& params, const std::filesystem::path& out) {
  check_keys("score", params, {"data", "models", "codec", "d_sub", "pq_k", "uq_k", "uq_mode", "efm", "efm_kernel",
                               "efm_order", "efm_period", "max_iter", "train_sample"}, false);
  const ParamReader r{params, "score"};
  const auto ds = read_dataset(r.required("data"));
  const auto models = parse_models_jsonl(io::read_file(r.required("models")));
  const auto features = maybe_efm(ds, r.flag("efm", false), efm_config(r));
  const auto test_ids = ds.test_ids();
  const std::string codec = r.str("codec", "dense");
  std::map<std::string, CompressedIndex> indexes;
  std::map<std::string, FeatureMatrix> dense;
  std::set<std::string> needed;
  for (const auto& m : models) needed.insert(m.feature_name);
  std::vector<std::string> names(needed.begin(), needed.end());
  std::vector<CompressedIndex> built(names.size());
  std::vector<FeatureMatrix> tests(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    tests[i] = subset(find_feature(features, names[i]), test_ids);
    if (codec == "pq") {
      PqOptions po;
      po.d_sub = r.integer("d_sub", 8);
      po.k = r.integer("pq_k", 256);
      po.max_iter = r.integer("max_iter", 10);
      po.train_sample = r.integer("train_sample", 1000);
      po.pad = true;
      po.seed = derive_seed(r.seed(), "pq:" + names[i]);
      auto cb = pq_train(tests[i], po);
      auto codes = pq_encode(cb, tests[i]);
      built[i] = make_pq_index(std::move(cb), std::move(codes));
    } else if (codec == "uq") {
      const auto mode = r.str("uq_mode", "quantile") == "quantile" ? UqMode::Quantile : UqMode::MinMax;
      auto model = uq_train(tests[i], r.integer("uq_k", 256), mode);
      auto codes = uq_encode(model, tests[i]);
      built[i] = make_uq_index(std::move(model), std::move(codes), tests[i].ids());
    } else if (codec != "dense") {
      throw ConfigError("score: codec must be dense, pq or uq");
    }
  });
  for (std::size_t i = 0; i < names.size(); ++i) {
    dense.emplace(names[i], std::move(tests[i]));
    if (codec != "dense") indexes.emplace(names[i], std::move(built[i]));
  }
  std::map<std::string, std::vector<ScoreList>> per_event;
  for (const auto& m : models)
    per_event[m.event_id].push_back(codec == "dense" ? predict_scores(m, dense.at(m.feature_name))
                                                     : predict_scores(m, indexes.at(m.feature_name)));
  CommandResult res;
  for (const auto& [event, lists] : per_event)
    write_out(out, res, "test/" + event + ".json", score_matrix_json(ScoreMatrix::from_lists(lists)));
  return res;
}

CommandResult cmd_fuse(const Params& params, const std::filesystem::path& out) {
  check_keys("fuse", params, {"heldout", "test", "method"}, true);
  const ParamReader r{params, "fuse"};
  const auto options = run_options_from(params);
  const std::string method = r.str("method", "mhlf");
  if (method != "mhlf") parse_baseline(method);
  CommandResult res;
  std::vector<FusionReport> reports;
  for (const auto& hp : files_with_ext(r.required("heldout"), ".json")) {
    const auto h = read_score_matrix(hp);
    const auto t = read_score_matrix(std::filesystem::path(r.required("test")) / hp.filename());
    const std::uint64_t seed = derive_seed(options.seed, "event:" + h.event_id);
    if (method == "mhlf") {
      MhlfConfig mc = options.mhlf;
      mc.seed = seed;
      auto f = mhlf_fuse(h, t, mc);
      write_ranked(out, res, f.ranking);
      reports.push_back(std::move(f.report));
    } else {
      write_ranked(out, res, baseline_fuse(h, t, parse_baseline(method), options.mhlf.normalization, seed));
    }
  }
  if (method == "mhlf") write_out(out, res, "fusion_report.json", fusion_report_json(reports));
  return res;
}

std::vector<RankedList> read_ranked_dir(const Dataset& ds, const std::filesystem::path& dir) {
  std::vector<RankedList> out;
  for (const auto& e : ds.events) {
    const auto path = dir / (e + ".tsv");
    if (!std::filesystem::exists(path)) continue;
    out.push_back(to_ranked_list(io::read_scores_tsv(path, e, "ranked")));
  }
  if (out.empty()) throw DataError("no ranked lists for known events in " + dir.string());
  return out;
}

CommandResult cmd_search(const Params& params, const std::filesystem::path& out) {
  check_keys("search", params, {"data"}, true);
  const ParamReader r{params, "search"};
  const auto ds = read_dataset(r.required("data"));
  const auto options = run_options_from(params);
  CommandResult res;
  for (const auto& e : ds.events) write_ranked(out, res, semantic_search(ds, e, options));
  return res;
}

CommandResult cmd_rerank(const Params& params, const std::filesystem::path& out) {
  check_keys("rerank", params, {"data", "initial"}, true);
  const ParamReader r{params, "rerank"};
  const auto ds = read_dataset(r.required("data"));
  const auto options = run_options_from(params);
  const auto initial = read_ranked_dir(ds, r.required("initial"));
  std::vector<FeatureMatrix> test_features;
  const auto ids = initial.front().ids();
  std::vector<VideoId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  for (const auto& f : ds.features) test_features.push_back(subset(f, sorted));
  std::vector<RerankResult> results(initial.size());
  parallel_for(initial.size(), [&](std::size_t i) {
    results[i] = spar_rerank(initial[i], test_features, options.prf, derive_seed(options.seed, "event:" + initial[i].event_id()));
  });
  CommandResult res;
  std::string trace;
  for (std::size_t i = 0; i < results.size(); ++i) {
    write_ranked(out, res, results[i].ranking);
    trace += rerank_trace_jsonl(initial[i].event_id(), results[i].trace);
  }
  write_out(out, res, "rerank_trace.jsonl", trace);
  return res;
}

CommandResult cmd_eval(const Params& params, const std::filesystem::path& out) {
  check_keys("eval", params, {"data", "ranked", "split"}, false);
  const ParamReader r{params, "eval"};
  const auto ds = read_dataset(r.required("data"));
  const auto split = parse_split(r.str("split", "test"));
  std::map<std::string, double> ap;
  double total = 0.0;
  for (const auto& l : read_ranked_dir(ds, r.required("ranked"))) {
    ap[l.event_id()] = average_precision(l, ds.gt.evaluation_positives(l.event_id(), split));
    total += ap[l.event_id()];
  }
  CommandResult res;
  write_out(out, res, "map.json", format_map_json(ap, total / static_cast<double>(ap.size()), config_hash("eval", params)));
  return res;
}

CommandResult cmd_run(const Params& params, const std::filesystem::path& out) {
  check_keys("run", params, {"data", "scenario"}, true);
  const ParamReader r{params, "run"};
  const auto ds = read_dataset(r.required("data"));
  const auto scenario = scenario_param(r);
  const auto result = run_scenario(ds, scenario, run_options_from(params));
  CommandResult res;
  std::vector<FusionReport> reports;
  std::string trace;
  for (const auto& e : result.events) {
    write_ranked(out, res, e.ranking);
    if (!e.fusion.event_id.empty()) reports.push_back(e.fusion);
    trace += e.rerank_trace;
  }
  if (!reports.empty()) write_out(out, res, "fusion_report.json", fusion_report_json(reports));
  if (!trace.empty()) write_out(out, res, "rerank_trace.jsonl", trace);
  write_out(out, res, "map.json", format_map_json(result.ap, result.map, config_hash("run", params)));
  return res;
}

CommandResult cmd_robustness(const Params& params, const std::filesystem::path& out) {
  check_keys("exp-robustness", params, {"data", "trials", "fractions", "source", "ensemble_events"}, true);
  const ParamReader r{params, "exp-robustness"};
  const auto options = run_options_from(params);
  RobustnessOptions ro;
  ro.trials = r.integer("trials", ro.trials);
  if (r.has("fractions")) ro.fractions = parse_doubles("fractions", r.required("fractions"));
  ro.mhlf = options.mhlf;
  ro.seed = options.seed;
  std::vector<EnsembleEvent> events;
  const std::string source = r.str("source", "dataset");
  if (source == "dataset") {
    events = ensemble_from_dataset(read_dataset(r.required("data")), options);
  } else if (source == "ensemble") {
    EnsembleConfig ec;
    ec.n_events = r.integer("ensemble_events", ec.n_events);
    ec.seed = options.seed;
    events = synth_ensemble(ec);
  } else {
    throw ConfigError("exp-robustness: source must be dataset or ensemble");
  }
  CommandResult res;
  write_out(out, res, "robustness.csv", format_robustness_csv(robustness_experiment(events, ro)));
  return res;
}

CommandResult cmd_degradation(const Params& params, const std::filesystem::path& out) {
  check_keys("exp-degradation", params, {"data", "variants", "sweep", "pq_max_iter", "pq_train_sample", "uq_mode",
                                         "uq_default_k", "efm_kernel", "efm_order", "efm_period"}, true);
  const ParamReader r{params, "exp-degradation"};
  const auto ds = read_dataset(r.required("data"));
  DegradationOptions o;
  o.run = run_options_from(params);
  if (r.has("variants")) {
    o.variants.clear();
    for (const auto& v : io::split(r.required("variants"), ',')) o.variants.emplace_back(io::trim(v));
  }
  o.sweep = r.flag("sweep", o.sweep);
  o.pq_max_iter = r.integer("pq_max_iter", o.pq_max_iter);
  o.pq_train_sample = r.integer("pq_train_sample", o.pq_train_sample);
  o.uq_default_k = r.integer("uq_default_k", o.uq_default_k);
  o.uq_mode = r.str("uq_mode", "quantile") == "minmax" ? UqMode::MinMax : UqMode::Quantile;
  o.efm = efm_config(r);
  const auto rows = degradation_experiment(ds, o);
  CommandResult res;
  write_out(out, res, "degradation.csv", format_degradation_csv(rows));
  io::write_file_atomic(out / "timings.csv", format_timings_csv(rows));
  res.volatile_outputs.push_back("timings.csv");
  return res;
}

const std::map<std::string, std::function<CommandResult(const Params&, const std::filesystem::path&)>>& commands() {
  static const std::map<std::string, std::function<CommandResult(const Params&, const std::filesystem::path&)>> table{
      {"gen", cmd_gen},       {"encode", cmd_encode}, {"index", cmd_index},
      {"train", cmd_train},   {"score", cmd_score},   {"fuse", cmd_fuse},
      {"rerank", cmd_rerank}, {"search", cmd_search}, {"eval", cmd_eval},
      {"run", cmd_run},       {"exp-robustness", cmd_robustness}, {"exp-degradation", cmd_degradation}};
  return table;
}

}  // namespace

std::vector<std::string> command_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : commands()) out.push_back(k);
  return out;
}

CommandResult run_command(const std::string& command, const std::map<std::string, std::string>& params,
                          const std::filesystem::path& out) {
  auto it = commands().find(command);
  if (it == commands().end()) throw ConfigError("unknown command '" + command + "'");
  std::filesystem::create_directories(out);
  return it->second(params, out);
}

std::string config_hash(const std::string& command, const std::map<std::string, std::string>& params) {
  std::string canon = command + "\n";
  for (const auto& [k, v] : params) canon += k + "=" + v + "\n";
  return io::fnv1a_hex(canon);
}

void write_manifest(const std::filesystem::path& out, const std::string& command,
                    const std::map<std::string, std::string>& params, const CommandResult& result, int threads) {
  ojson j;
  j["tool"] = "cbvr";
  j["format"] = 1;
  j["command"] = command;
  j["config_hash"] = config_hash(command, params);
  ojson p = ojson::object();
  for (const auto& [k, v] : params) p[k] = v;
  j["params"] = p;
  j["seed"] = params.count("seed") ? params.at("seed") : "0";
  if (params.count("scenario")) j["scenario"] = params.at("scenario");
  j["threads"] = threads;
  ojson outputs = ojson::array();
  for (const auto& rel : result.outputs) outputs.push_back({{"path", rel}, {"fnv1a", io::fnv1a_hex(io::read_file(out / rel))}});
  j["outputs"] = outputs;
  j["volatile_outputs"] = result.volatile_outputs;
  io::write_file_atomic(out / "manifest.json", j.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    Manifest m;
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [k, v] : j.at("params").items()) m.params[k] = v.get<std::string>();
    for (const auto& o : j.at("outputs")) {
      m.outputs.push_back(o.at("path").get<std::string>());
      m.output_hashes[m.outputs.back()] = o.at("fnv1a").get<std::string>();
    }
    if (config_hash(m.command, m.params) != m.config_hash) throw DataError(path.string() + ": config hash does not match params");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace cbvr
