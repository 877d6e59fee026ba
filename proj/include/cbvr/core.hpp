#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbvr/error.hpp"

namespace cbvr {

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Non-empty video token. Ordered byte-wise; the order breaks score ties.
class VideoId {
 public:
  VideoId() = default;
  explicit VideoId(std::string id);

  const std::string& str() const noexcept { return id_; }
  bool empty() const noexcept { return id_.empty(); }

  friend bool operator==(const VideoId&, const VideoId&) = default;
  friend std::strong_ordering operator<=>(const VideoId& a, const VideoId& b) {
    const int c = a.id_.compare(b.id_);
    return c < 0 ? std::strong_ordering::less
                 : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
  }

 private:
  std::string id_;
};

}  // namespace cbvr

template <>
struct std::hash<cbvr::VideoId> {
  std::size_t operator()(const cbvr::VideoId& v) const noexcept {
    return std::hash<std::string>{}(v.str());
  }
};

namespace cbvr {

/// Dense per-video vectors of one feature type. Immutable after construction.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::string feature_name, std::vector<VideoId> video_ids, RowMatrixF values);

  const std::string& name() const noexcept { return name_; }
  const std::vector<VideoId>& ids() const noexcept { return ids_; }
  const RowMatrixF& values() const noexcept { return values_; }
  Eigen::Index size() const noexcept { return values_.rows(); }
  Eigen::Index dim() const noexcept { return values_.cols(); }

  bool contains(const VideoId& id) const { return row_of_.count(id) != 0; }
  /// Throws DataError when the id is absent.
  Eigen::Index row(const VideoId& id) const;
  /// Rows for `ids`, in the given order, widened to double.
  RowMatrixD gather(std::span<const VideoId> ids) const;

 private:
  std::string name_;
  std::vector<VideoId> ids_;
  RowMatrixF values_;
  std::unordered_map<VideoId, Eigen::Index> row_of_;
};

struct ScoreEntry {
  VideoId id;
  double score = 0.0;
};

/// Per-event, per-source video scores. Finite, one entry per video.
class ScoreList {
 public:
  ScoreList() = default;
  ScoreList(std::string event_id, std::string source, std::vector<ScoreEntry> entries);

  const std::string& event_id() const noexcept { return event_id_; }
  const std::string& source() const noexcept { return source_; }
  const std::vector<ScoreEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::string event_id_;
  std::string source_;
  std::vector<ScoreEntry> entries_;
};

/// Descending by score, ties ascending by VideoId.
class RankedList {
 public:
  RankedList() = default;

  const std::string& event_id() const noexcept { return event_id_; }
  const std::vector<ScoreEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<VideoId> ids() const;
  ScoreList as_scores(std::string source = "ranked") const;

  friend RankedList to_ranked_list(const ScoreList& scores);

 private:
  std::string event_id_;
  std::vector<ScoreEntry> entries_;
};

enum class NormMethod { ZScore, MinMax, Rank };
NormMethod parse_norm_method(std::string_view token);

ScoreList normalize_scores(const ScoreList& scores, NormMethod method);
RankedList to_ranked_list(const ScoreList& scores);

/// Normalizes a score vector whose positions carry the given tie-break order
/// (smaller key wins ties). Used wherever scores are kept column-aligned.
std::vector<double> normalize_vector(std::span<const double> scores, NormMethod method,
                                     std::span<const std::uint32_t> tie_keys);

/// Positions sorted best-first: score descending, then tie key ascending.
std::vector<std::uint32_t> rank_order(std::span<const double> scores,
                                      std::span<const std::uint32_t> tie_keys);

double average_precision(const RankedList& ranked, const std::set<VideoId>& positives);

/// AP over column-aligned scores and 0/1 labels; ties resolved by `tie_keys`.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         std::span<const std::uint32_t> tie_keys);

enum class Split { Exemplar, Background, Validation, Test };
std::string_view to_string(Split s);
Split parse_split(std::string_view token);

/// Event relevance plus split membership. Copies share one read counter for
/// evaluation labels so pipelines can prove they never touched them.
class GroundTruth {
 public:
  GroundTruth();

  void set_split(const VideoId& id, Split split);
  void add_positive(const std::string& event_id, const VideoId& id);
  /// Checks disjointness of positives and background.
  void validate() const;

  std::vector<std::string> events() const;
  bool has_event(const std::string& event_id) const { return positives_.count(event_id) != 0; }
  std::vector<VideoId> ids_in_split(Split split) const;
  std::optional<Split> split_of(const VideoId& id) const;

  /// Training-side labels: exemplar positives of the event.
  std::vector<VideoId> exemplars(const std::string& event_id) const;
  /// Evaluation-side labels. Every call is counted.
  std::set<VideoId> evaluation_positives(const std::string& event_id, Split split = Split::Test) const;
  std::size_t evaluation_reads() const noexcept { return eval_reads_->load(); }

  /// All (event, positive) pairs regardless of split; for serialization.
  const std::map<std::string, std::set<VideoId>>& all_positives() const noexcept { return positives_; }
  const std::map<VideoId, Split>& splits() const noexcept { return split_; }

 private:
  std::map<std::string, std::set<VideoId>> positives_;
  std::map<VideoId, Split> split_;
  std::shared_ptr<std::atomic<std::size_t>> eval_reads_;
};

/// Unweighted mean of per-event AP. Throws naming the first event that lacks
/// ground truth.
double mean_average_precision(const std::map<std::string, RankedList>& lists,
                              const GroundTruth& gt, Split split = Split::Test);

}  // namespace cbvr
