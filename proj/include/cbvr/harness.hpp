#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cbvr/fusion.hpp"
#include "cbvr/kernel_maps.hpp"
#include "cbvr/learners.hpp"
#include "cbvr/reranking.hpp"
#include "cbvr/semantic.hpp"
#include "cbvr/synth.hpp"

namespace cbvr {

struct RunOptions {
  ClassifierChoice classifier_100 = ClassifierChoice::Both;
  TrainOptions train;
  MhlfConfig mhlf;
  PrfConfig prf;
  bool prf_010 = false;
  RetrievalModel retrieval = RetrievalModel::Bm25;
  double tau = 0.3;
  int exemplars_010 = 10;
  std::uint64_t seed = 0;

  /// Returns false for unknown keys; throws ConfigError on bad values.
  bool set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
};

/// Rows of a test collection restricted to `ids` (ascending).
FeatureMatrix subset(const FeatureMatrix& fm, std::span<const VideoId> ids);

struct EventRun {
  std::string event_id;
  RankedList ranking;
  FusionReport fusion;
  std::string rerank_trace;
};

struct ScenarioResult {
  Scenario scenario = Scenario::SQ;
  std::vector<EventRun> events;
  std::map<std::string, double> ap;
  double map = 0.0;
};

/// Semantic-query ranking of the test collection for one event.
RankedList semantic_search(const Dataset& ds, const std::string& event_id, const RunOptions& options);

/// Held-out and test score matrices of the trained sources for one event.
struct TrainedEvent {
  EventTraining training;
  ScoreMatrix heldout;
  ScoreMatrix test;
};
TrainedEvent train_and_score(const Dataset& ds, std::span<const FeatureMatrix> train_features,
                             std::span<const FeatureMatrix> test_features, const std::string& event_id,
                             Scenario scenario, const RunOptions& options);

/// Runs every event of the scenario, then evaluates on the test split. Throws
/// InternalError if test labels were read before evaluation.
ScenarioResult run_scenario(const Dataset& ds, Scenario scenario, const RunOptions& options);

struct RobustnessRow {
  double fraction = 0.0;
  int n_features = 0;
  std::string method;
  int trials = 0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct RobustnessOptions {
  std::vector<double> fractions{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
  int trials = 60;
  MhlfConfig mhlf;
  std::uint64_t seed = 0;
};

/// Per fraction: sample sources, fuse with mhlf/average/linreg, report mean
/// MAP with a normal-approximation 95% CI.
std::vector<RobustnessRow> robustness_experiment(const std::vector<EnsembleEvent>& events,
                                                 const RobustnessOptions& options);
/// 010Ex held-out/test matrices (KRR on every feature) from a dataset.
std::vector<EnsembleEvent> ensemble_from_dataset(const Dataset& ds, const RunOptions& options);
std::string format_robustness_csv(const std::vector<RobustnessRow>& rows);

/// Mean AP over events for one fusion method on fixed matrices.
double fused_map(const std::vector<EnsembleEvent>& events, const std::string& method, const MhlfConfig& mhlf,
                 std::uint64_t seed, std::span<const int> rows = {});

struct DegradationRow {
  std::string variant;
  std::string codec;
  double ratio = 1.0;
  double map = 0.0;
  double rel_delta = 0.0;  // relative to exact
  double score_seconds = 0.0;
};

struct DegradationOptions {
  std::vector<std::string> variants{"exact", "efm", "pq", "efm+pq", "uq"};
  bool sweep = true;
  std::vector<int> pq_dsub{2, 4, 8, 16};
  std::vector<int> uq_k{256, 16, 4, 2};
  int pq_k = 256;
  int pq_max_iter = 10;
  int pq_train_sample = 100000;
  int uq_default_k = 2;
  UqMode uq_mode = UqMode::Quantile;
  HomogeneousMapConfig efm;
  RunOptions run;
};

std::vector<DegradationRow> degradation_experiment(const Dataset& ds, const DegradationOptions& options);
std::string format_degradation_csv(const std::vector<DegradationRow>& rows);
std::string format_timings_csv(const std::vector<DegradationRow>& rows);

std::string format_map_json(const std::map<std::string, double>& ap, double map, const std::string& manifest_hash);

/// Command surface shared by the CLI and replay. `params` holds every
/// resolved setting; outputs land in `out`.
struct CommandResult {
  std::vector<std::string> outputs;           // relative to out, deterministic
  std::vector<std::string> volatile_outputs;  // e.g. wall-clock timings
};
std::vector<std::string> command_names();
CommandResult run_command(const std::string& command, const std::map<std::string, std::string>& params,
                          const std::filesystem::path& out);

/// Hash of the command and its parameters; excludes output dir and threads.
std::string config_hash(const std::string& command, const std::map<std::string, std::string>& params);
void write_manifest(const std::filesystem::path& out, const std::string& command,
                    const std::map<std::string, std::string>& params, const CommandResult& result, int threads);
struct Manifest {
  std::string command;
  std::map<std::string, std::string> params;
  std::string config_hash;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> output_hashes;
};
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace cbvr
