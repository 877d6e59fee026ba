#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbvr/core.hpp"

namespace cbvr {

enum class Modality { Visual, Asr, Ocr };
Modality parse_modality(std::string_view token);
std::string_view to_string(Modality m);

class ConceptVocabulary {
 public:
  ConceptVocabulary() = default;
  ConceptVocabulary(std::vector<std::string> concepts, std::vector<Modality> modalities);

  const std::vector<std::string>& concepts() const noexcept { return concepts_; }
  Modality modality(std::size_t i) const { return modality_[i]; }
  std::size_t size() const noexcept { return concepts_.size(); }
  /// -1 when absent.
  int index_of(std::string_view token) const;
  /// Concepts of one modality in vocabulary order.
  std::vector<std::string> terms(Modality m) const;

 private:
  std::vector<std::string> concepts_;
  std::vector<Modality> modality_;
  std::unordered_map<std::string, int> index_;
};

ConceptVocabulary parse_vocabulary_csv(std::string_view text);
std::string format_vocabulary_csv(const ConceptVocabulary& vocab);

/// Query-word x concept similarity in [0, 1].
struct SimilarityMatrix {
  std::vector<std::string> words;
  std::vector<std::string> concepts;
  Eigen::MatrixXd sim;
  void validate() const;
};

SimilarityMatrix parse_similarity_tsv(std::string_view text);
std::string format_similarity_tsv(const SimilarityMatrix& s);

struct QueryTerm {
  std::string name;
  Modality modality = Modality::Visual;
  double weight = 0.0;
};

struct SemanticQuery {
  std::vector<QueryTerm> terms;  // vocabulary order
  std::map<Modality, double> modality_weights() const;
};

/// Keeps every concept with similarity >= tau, summing over query words.
SemanticQuery sqg_map(std::span<const std::string> words, const SimilarityMatrix& provider,
                      const ConceptVocabulary& vocab, double tau = 0.3);

/// Videos x terms of one modality; nonnegative (detector scores act as
/// fractional term frequencies).
struct ModalityDocs {
  std::vector<std::string> terms;
  RowMatrixD values;
};

struct SemanticDocMatrix {
  std::vector<VideoId> videos;
  std::map<Modality, ModalityDocs> modalities;
  void validate() const;
};

enum class RetrievalModel { Vsm, Tfidf, Bm25, Lm };
RetrievalModel parse_retrieval_model(std::string_view token);

struct RetrievalParams {
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  double lm_lambda = 0.5;
};

/// Raw per-video scores of one modality for weighted query terms.
std::vector<double> retrieval_scores(std::span<const std::pair<std::string, double>> query, const ModalityDocs& docs,
                                     RetrievalModel model, const RetrievalParams& params = {});

std::map<Modality, RankedList> retrieve(const SemanticQuery& query, const SemanticDocMatrix& docs,
                                        RetrievalModel model, const std::string& event_id,
                                        const RetrievalParams& params = {});

/// Rank-normalized weighted average of per-modality lists.
RankedList modality_fuse(const std::map<Modality, RankedList>& lists, const std::map<Modality, double>& weights);

/// Visual scores go to a UQ (k=256) index; asr/ocr rows to JSON lines.
void write_semantic_docs(const std::filesystem::path& dir, const SemanticDocMatrix& docs);
SemanticDocMatrix read_semantic_docs(const std::filesystem::path& dir, const ConceptVocabulary& vocab);

}  // namespace cbvr
