#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbvr/core.hpp"

namespace cbvr {

enum class SpScheme { Binary, Mixture };
SpScheme parse_sp_scheme(std::string_view token);

struct LambdaPair {
  double l1 = 0.0;
  double l2 = 0.0;
};

struct PrfConfig {
  int k_pos = 10;
  int k_neg = 50;
  int iterations = 2;
  SpScheme scheme = SpScheme::Mixture;
  /// Explicit (l1, l2) per iteration. Empty selects loss percentiles:
  /// (90th, 60th) on the first iteration, (95th, 70th) on the second.
  std::vector<LambdaPair> lambdas;
  bool blend = true;
  double ridge_lambda = 1.0;
  /// Alternating model/weight updates inside one iteration.
  int inner_rounds = 2;
  void validate() const;
};

struct PseudoLabels {
  std::vector<VideoId> positives;
  std::vector<VideoId> negatives;
};

/// Top k_pos are pseudo-positive; k_neg drawn (seeded) from the bottom half.
PseudoLabels mmprf_init(const RankedList& initial, int k_pos, int k_neg, std::uint64_t seed);

/// Self-paced sample weights in [0, 1]. Binary ignores l2.
std::vector<double> spar_weights(std::span<const double> losses, double l1, double l2, SpScheme scheme);
/// Self-paced regularizer whose per-sample minimizer of v*loss + f(v) is spar_weights.
double spar_regularizer(double v, double l1, double l2, SpScheme scheme);

struct RerankIteration {
  int iteration = 0;
  LambdaPair lambdas;           // pseudo-negatives
  LambdaPair positive_lambdas;  // pseudo-positives
  PseudoLabels labels;
  std::vector<double> weights;    // aligned with labels: positives then negatives
  std::vector<double> objective;  // after every model step and every weight step
};

struct RerankResult {
  RankedList ranking;
  RankedList reranked;  // before blending
  std::vector<RerankIteration> trace;
  bool degenerate = false;
};

RerankResult spar_rerank(const RankedList& initial, std::span<const FeatureMatrix> features, const PrfConfig& config,
                         std::uint64_t seed);

/// Unweighted pseudo-relevance feedback: one round of ridge retraining on
/// mmprf_init labels with every sample weight fixed at one.
RankedList prf_rerank(const RankedList& initial, std::span<const FeatureMatrix> features, int k_pos, int k_neg,
                      double ridge_lambda, std::uint64_t seed);

/// Rank-normalizes both lists, averages per video and re-ranks.
RankedList blend_final(const RankedList& initial, const RankedList& reranked);

std::string rerank_trace_jsonl(const std::string& event_id, std::span<const RerankIteration> trace,
                               std::span<const double> map_if_known = {});

}  // namespace cbvr
