#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cbvr/core.hpp"

namespace cbvr {

/// Rows are score sources, columns are videos in ascending id order.
/// Labels are present only on held-out matrices; test matrices carry none.
struct ScoreMatrix {
  std::string event_id;
  std::vector<std::string> names;
  std::vector<VideoId> videos;
  RowMatrixD scores;
  std::vector<std::uint8_t> labels;

  Eigen::Index rows() const { return scores.rows(); }
  Eigen::Index cols() const { return scores.cols(); }
  bool has_labels() const { return !labels.empty(); }
  std::size_t positives() const;
  void validate() const;

  /// Builds a matrix from per-source score lists over the same videos.
  /// With `positives`, labels are filled from membership.
  static ScoreMatrix from_lists(std::span<const ScoreList> lists, const std::set<VideoId>* positives = nullptr);
  ScoreMatrix select_rows(std::span<const int> rows) const;
  std::vector<std::uint32_t> tie_keys() const;
};

enum class Strategy { Average, SingleAp, Loo, SgdAp };
Strategy parse_strategy(std::string_view token);
std::string_view to_string(Strategy s);

struct FusionWeights {
  std::string strategy;
  std::vector<double> weights;
};

struct SgdApOptions {
  double beta = 10.0;
  double learning_rate = 0.05;
  int epochs = 200;
  int negative_batch = 128;
};

struct MhlfConfig {
  int leaf_size = 4;
  int max_depth = 6;
  std::vector<Strategy> strategies{Strategy::Average, Strategy::SingleAp, Strategy::Loo, Strategy::SgdAp};
  NormMethod normalization = NormMethod::ZScore;
  bool rank_augment = true;
  bool cluster = true;
  /// When false, only the normalized originals enter the PCA tree.
  bool cluster_rank_rows = true;
  /// Drops rows whose held-out and test scores both repeat an earlier row.
  bool dedup = true;
  SgdApOptions sgd;
  std::uint64_t seed = 0;
  void validate() const;
};

ScoreMatrix normalize_rows(const ScoreMatrix& m, NormMethod method);
ScoreMatrix rank_augment(const ScoreMatrix& m);

struct EssentialFeatures {
  ScoreMatrix matrix;                     // one mean row per leaf
  std::vector<std::vector<int>> members;  // input rows of each leaf
};
EssentialFeatures pca_tree_cluster(const ScoreMatrix& m, int leaf_size, int max_depth);

/// Nonnegative weights summing to one. Requires labels with a positive.
FusionWeights strategy_weights(const ScoreMatrix& m, Strategy strategy, std::uint64_t seed = 0,
                               const SgdApOptions& sgd = {});

/// Smoothed AP used by sgd_ap; exposed for gradient checks.
double smoothed_ap(const ScoreMatrix& m, std::span<const double> weights, double beta);

struct FusionReport {
  std::string event_id;
  std::vector<std::string> input_rows;
  std::vector<std::string> kept_rows;
  std::vector<std::string> augmented_rows;
  std::vector<std::string> essential_rows;
  std::map<std::string, std::vector<double>> strategy_weights;
  std::vector<double> final_weights;  // over augmented_rows then essential_rows
  std::map<std::string, double> ap;   // filled by callers that know labels
};

struct FusionResult {
  RankedList ranking;
  FusionReport report;
};

/// `train` carries held-out labels; `test` must list the same sources.
FusionResult mhlf_fuse(const ScoreMatrix& train, const ScoreMatrix& test, const MhlfConfig& config = {});

enum class BaselineMethod { Average, LinReg };
BaselineMethod parse_baseline(std::string_view token);
RankedList baseline_fuse(const ScoreMatrix& train, const ScoreMatrix& test, BaselineMethod method,
                         NormMethod normalization = NormMethod::ZScore, std::uint64_t seed = 0);

std::string fusion_report_json(std::span<const FusionReport> reports);

}  // namespace cbvr
