#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cbvr/core.hpp"

namespace cbvr::io {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void bytes(std::string_view b) { buf_.append(b); }
  /// u16 length prefix, then the bytes. Throws DataError above 65535 bytes.
  void short_string(std::string_view s);

  const std::string& data() const noexcept { return buf_; }

 private:
  std::string buf_;
};

/// Little-endian byte source; running past the end throws `Truncated`.
class ByteReader {
 public:
  struct Truncated : DataError {
    Truncated() : DataError("truncated input") {}
  };

  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  std::string_view bytes(std::size_t n);
  std::string short_string();

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes via a sibling temp file and rename so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// `video_id<TAB>score`, 9 significant digits, LF endings.
std::string format_scores_tsv(const std::vector<ScoreEntry>& entries);
void write_scores_tsv(const std::filesystem::path& path, const std::vector<ScoreEntry>& entries);
ScoreList read_scores_tsv(const std::filesystem::path& path, std::string event_id,
                          std::string source);

/// `event_id,video_id,label`; label is a split name for rows with event `*`,
/// and `positive` for event relevance rows.
std::string format_ground_truth_csv(const GroundTruth& gt);
GroundTruth parse_ground_truth_csv(std::string_view text);
GroundTruth read_ground_truth_csv(const std::filesystem::path& path);

/// Binary dense feature file (magic "CBVRFMX1").
std::string encode_feature_matrix(const FeatureMatrix& fm);
FeatureMatrix decode_feature_matrix(std::string_view bytes);
void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Splits on a single character, keeping empty fields.
std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace cbvr::io
