#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cbvr/core.hpp"
#include "cbvr/fusion.hpp"
#include "cbvr/semantic.hpp"

namespace cbvr {

/// Deterministic child seed; independent of scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0);

/// Parses the flat `key = value` config format; `#` starts a comment.
std::map<std::string, std::string> parse_config_text(std::string_view text);

struct SynthConfig {
  int n_events = 20;
  int n_videos = 2000;      // test collection
  int n_background = 500;   // shared training negatives
  int n_exemplars = 100;    // positives per event available for training
  int test_positives = 30;  // per event, inside the test collection
  int n_features = 47;
  std::vector<int> groups{5, 5, 5, 4, 4, 4, 4, 4, 3, 3, 3, 3};
  int feature_dim = 32;
  /// One value per group; empty means an evenly spaced ramp snr_min..snr_max
  /// with the largest groups weakest.
  std::vector<double> group_snr;
  double snr_min = 0.3;
  double snr_max = 0.9;
  double group_noise = 1.0;
  double private_noise = 0.3;
  double noise_decay = 0.15;  // per-dimension spectrum decay of the shared noise
  // With latent_dim > 0 visual features live in a latent_dim subspace of
  // feature_dim (random orthonormal embedding per group); 0 keeps the axes.
  int latent_dim = 0;
  double ambient_noise = 0.0;  // isotropic, added after the embedding
  // Shared group noise drawn from n_topics scene prototypes (0: continuous).
  int n_topics = 0;
  int n_visual = 60;
  int n_asr = 40;
  int n_ocr = 30;
  double detect_prob = 0.6;
  double detect_boost = 3.0;
  double asr_prob = 0.4;
  double ocr_prob = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
  /// Returns false for unknown keys; throws ConfigError on bad values.
  bool set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  double snr_of_group(int g) const;
};

struct Dataset {
  SynthConfig config;
  std::vector<std::string> events;
  std::vector<FeatureMatrix> features;  // all videos
  std::vector<std::string> kinds;       // "bow" or "fv" per feature
  std::vector<int> feature_group;
  GroundTruth gt;
  ConceptVocabulary vocab;
  SimilarityMatrix similarity;
  SemanticDocMatrix docs;  // test collection only
  std::map<std::string, std::vector<std::string>> queries;

  std::vector<VideoId> test_ids() const { return gt.ids_in_split(Split::Test); }
  std::vector<VideoId> background_ids() const { return gt.ids_in_split(Split::Background); }
};

Dataset synth_generate(const SynthConfig& config);

/// Directory layout: features/*.fmx, ground_truth.csv, queries.tsv,
/// features.tsv, synth.cfg, semantic/{vocab.csv,similarity.tsv,visual.idx,asr.jsonl,ocr.jsonl}.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

/// Score-level stand-in for a trained 47-source ensemble: per event a
/// held-out matrix with labels and a test matrix whose positives are known.
struct EnsembleConfig {
  int n_events = 20;
  int heldout_positives = 10;
  int heldout_negatives = 500;
  int test_videos = 2000;
  int test_positives = 30;
  std::vector<int> groups{5, 5, 5, 4, 4, 4, 4, 4, 3, 3, 3, 3};
  // Per-group SNR ramp; the default puts fused MAP near 0.3.
  double snr_min = 0.1;
  double snr_max = 1.0;
  double group_noise = 1.0;
  double private_noise = 0.5;
  std::uint64_t seed = 0;
};

struct EnsembleEvent {
  ScoreMatrix heldout;
  ScoreMatrix test;
  std::set<VideoId> test_positives;
};

std::vector<EnsembleEvent> synth_ensemble(const EnsembleConfig& config);

}  // namespace cbvr
