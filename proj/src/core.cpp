#include "cbvr/core.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>

namespace cbvr {

namespace {

std::mutex g_warn_mutex;

void stderr_sink(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

WarningSink g_sink = &stderr_sink;

}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(g_warn_mutex);
  if (g_sink) g_sink(message);
}

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_warn_mutex);
  return std::exchange(g_sink, sink);
}

VideoId::VideoId(std::string id) : id_(std::move(id)) {
  if (id_.empty()) throw DataError("empty video id");
}

FeatureMatrix::FeatureMatrix(std::string feature_name, std::vector<VideoId> video_ids,
                             RowMatrixF values)
    : name_(std::move(feature_name)), ids_(std::move(video_ids)), values_(std::move(values)) {
  if (static_cast<Eigen::Index>(ids_.size()) != values_.rows()) {
    throw DataError("feature '" + name_ + "': " + std::to_string(ids_.size()) + " ids for " +
                    std::to_string(values_.rows()) + " rows");
  }
  if (!values_.allFinite()) throw DataError("feature '" + name_ + "' contains NaN/Inf");
  row_of_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!row_of_.emplace(ids_[i], static_cast<Eigen::Index>(i)).second) {
      throw DataError("feature '" + name_ + "': duplicate video id " + ids_[i].str());
    }
  }
}

Eigen::Index FeatureMatrix::row(const VideoId& id) const {
  auto it = row_of_.find(id);
  if (it == row_of_.end()) {
    throw DataError("feature '" + name_ + "' has no row for video " + id.str());
  }
  return it->second;
}

RowMatrixD FeatureMatrix::gather(std::span<const VideoId> ids) const {
  RowMatrixD out(static_cast<Eigen::Index>(ids.size()), dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = values_.row(row(ids[i])).cast<double>();
  }
  return out;
}

ScoreList::ScoreList(std::string event_id, std::string source, std::vector<ScoreEntry> entries)
    : event_id_(std::move(event_id)), source_(std::move(source)), entries_(std::move(entries)) {
  std::vector<const VideoId*> seen;
  seen.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (!std::isfinite(e.score)) {
      throw DataError("non-finite score for video " + e.id.str() + " in " + source_);
    }
    if (e.id.empty()) throw DataError("empty video id in score list " + source_);
    seen.push_back(&e.id);
  }
  std::sort(seen.begin(), seen.end(), [](auto* a, auto* b) { return *a < *b; });
  auto dup = std::adjacent_find(seen.begin(), seen.end(), [](auto* a, auto* b) { return *a == *b; });
  if (dup != seen.end()) throw DataError("duplicate video id " + (*dup)->str() + " in " + source_);
}

std::vector<VideoId> RankedList::ids() const {
  std::vector<VideoId> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.id);
  return out;
}

ScoreList RankedList::as_scores(std::string source) const {
  return ScoreList(event_id_, std::move(source), entries_);
}

NormMethod parse_norm_method(std::string_view token) {
  if (token == "zscore") return NormMethod::ZScore;
  if (token == "minmax") return NormMethod::MinMax;
  if (token == "rank") return NormMethod::Rank;
  throw ConfigError("unknown normalization '" + std::string(token) + "'");
}

std::vector<std::uint32_t> rank_order(std::span<const double> scores,
                                      std::span<const std::uint32_t> tie_keys) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return tie_keys[a] < tie_keys[b];
  });
  return order;
}

std::vector<double> normalize_vector(std::span<const double> scores, NormMethod method,
                                     std::span<const std::uint32_t> tie_keys) {
  const std::size_t n = scores.size();
  if (n == 0) throw DataError("empty score list");
  if (n < 2) throw DataError("score normalization needs at least two videos");
  std::vector<double> out(n);
  switch (method) {
    case NormMethod::ZScore: {
      double mean = 0.0;
      for (double s : scores) mean += s;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double s : scores) var += (s - mean) * (s - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) out[i] = sd > 0.0 ? (scores[i] - mean) / sd : 0.0;
      break;
    }
    case NormMethod::MinMax: {
      const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
      const double range = *hi - *lo;
      for (std::size_t i = 0; i < n; ++i) out[i] = range > 0.0 ? (scores[i] - *lo) / range : 0.0;
      break;
    }
    case NormMethod::Rank: {
      const auto order = rank_order(scores, tie_keys);
      const double denom = static_cast<double>(n - 1);
      for (std::size_t r = 0; r < n; ++r) out[order[r]] = 1.0 - static_cast<double>(r) / denom;
      break;
    }
  }
  return out;
}

namespace {

// Positions of entries in ascending id order, used as tie keys.
std::vector<std::uint32_t> id_tie_keys(const std::vector<ScoreEntry>& entries) {
  std::vector<std::uint32_t> idx(entries.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(),
            [&](std::uint32_t a, std::uint32_t b) { return entries[a].id < entries[b].id; });
  std::vector<std::uint32_t> keys(entries.size());
  for (std::uint32_t r = 0; r < idx.size(); ++r) keys[idx[r]] = r;
  return keys;
}

}  // namespace

ScoreList normalize_scores(const ScoreList& scores, NormMethod method) {
  const auto& entries = scores.entries();
  if (entries.empty()) throw DataError("empty score list");
  std::vector<double> raw(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) raw[i] = entries[i].score;
  const auto keys = id_tie_keys(entries);
  const auto norm = normalize_vector(raw, method, keys);
  std::vector<ScoreEntry> out(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) out[i] = {entries[i].id, norm[i]};
  return ScoreList(scores.event_id(), scores.source(), std::move(out));
}

RankedList to_ranked_list(const ScoreList& scores) {
  RankedList ranked;
  ranked.event_id_ = scores.event_id();
  ranked.entries_ = scores.entries();
  std::sort(ranked.entries_.begin(), ranked.entries_.end(),
            [](const ScoreEntry& a, const ScoreEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  return ranked;
}

double average_precision(const RankedList& ranked, const std::set<VideoId>& positives) {
  if (positives.empty()) throw DataError("no positives");
  std::size_t found = 0;
  double sum = 0.0;
  std::size_t k = 0;
  for (const auto& e : ranked.entries()) {
    ++k;
    if (positives.count(e.id)) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(k);
    }
  }
  if (found != positives.size()) {
    throw DataError("event " + ranked.event_id() + ": " + std::to_string(positives.size() - found) +
                    " positives missing from the ranked collection");
  }
  return sum / static_cast<double>(positives.size());
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels,
                         std::span<const std::uint32_t> tie_keys) {
  const auto order = rank_order(scores, tie_keys);
  std::size_t found = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]]) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(k + 1);
    }
  }
  if (found == 0) throw DataError("no positives");
  return sum / static_cast<double>(found);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Exemplar: return "exemplar";
    case Split::Background: return "background";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "test";
}

Split parse_split(std::string_view token) {
  if (token == "exemplar") return Split::Exemplar;
  if (token == "background") return Split::Background;
  if (token == "validation") return Split::Validation;
  if (token == "test") return Split::Test;
  throw DataError("unknown split label '" + std::string(token) + "'");
}

GroundTruth::GroundTruth() : eval_reads_(std::make_shared<std::atomic<std::size_t>>(0)) {}

void GroundTruth::set_split(const VideoId& id, Split split) { split_[id] = split; }

void GroundTruth::add_positive(const std::string& event_id, const VideoId& id) {
  positives_[event_id].insert(id);
}

void GroundTruth::validate() const {
  for (const auto& [event, ids] : positives_) {
    for (const auto& id : ids) {
      auto it = split_.find(id);
      if (it == split_.end()) {
        throw DataError("event " + event + ": positive " + id.str() + " has no split label");
      }
      if (it->second == Split::Background) {
        throw DataError("event " + event + ": positive " + id.str() + " is in the background set");
      }
    }
  }
}

std::vector<std::string> GroundTruth::events() const {
  std::vector<std::string> out;
  for (const auto& [event, ids] : positives_) out.push_back(event);
  return out;
}

std::vector<VideoId> GroundTruth::ids_in_split(Split split) const {
  std::vector<VideoId> out;
  for (const auto& [id, s] : split_) {
    if (s == split) out.push_back(id);
  }
  return out;
}

std::optional<Split> GroundTruth::split_of(const VideoId& id) const {
  auto it = split_.find(id);
  if (it == split_.end()) return std::nullopt;
  return it->second;
}

std::vector<VideoId> GroundTruth::exemplars(const std::string& event_id) const {
  std::vector<VideoId> out;
  auto it = positives_.find(event_id);
  if (it == positives_.end()) return out;
  for (const auto& id : it->second) {
    auto s = split_.find(id);
    if (s != split_.end() && s->second == Split::Exemplar) out.push_back(id);
  }
  return out;
}

std::set<VideoId> GroundTruth::evaluation_positives(const std::string& event_id, Split split) const {
  eval_reads_->fetch_add(1);
  std::set<VideoId> out;
  auto it = positives_.find(event_id);
  if (it == positives_.end()) return out;
  for (const auto& id : it->second) {
    auto s = split_.find(id);
    if (s != split_.end() && s->second == split) out.insert(id);
  }
  return out;
}

double mean_average_precision(const std::map<std::string, RankedList>& lists,
                              const GroundTruth& gt, Split split) {
  if (lists.empty()) throw DataError("no ranked lists to evaluate");
  double sum = 0.0;
  for (const auto& [event, list] : lists) {
    if (!gt.has_event(event)) throw DataError("no ground truth for event " + event);
    sum += average_precision(list, gt.evaluation_positives(event, split));
  }
  return sum / static_cast<double>(lists.size());
}

}  // namespace cbvr
