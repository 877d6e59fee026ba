#include "cbvr/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cbvr::io {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v & 0xff));
  u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::short_string(std::string_view s) {
  if (s.size() > 0xffff) throw DataError("string too long for u16 length prefix");
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(s);
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) throw Truncated();
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint16_t ByteReader::u16() {
  const std::uint16_t lo = u8();
  const std::uint16_t hi = u8();
  return static_cast<std::uint16_t>(lo | (hi << 8));
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::string_view ByteReader::bytes(std::size_t n) {
  need(n);
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string ByteReader::short_string() {
  const auto n = u16();
  return std::string(bytes(n));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string format_g9(double v) {
  std::array<char, 40> buf{};
  const int n = std::snprintf(buf.data(), buf.size(), "%.9g", v);
  return std::string(buf.data(), static_cast<std::size_t>(n));
}

double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("bad number '" + std::string(s) + "' in " + std::string(what));
  }
  return v;
}

}  // namespace

std::string format_scores_tsv(const std::vector<ScoreEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.id.str();
    out += '\t';
    out += format_g9(e.score);
    out += '\n';
  }
  return out;
}

void write_scores_tsv(const std::filesystem::path& path, const std::vector<ScoreEntry>& entries) {
  write_file_atomic(path, format_scores_tsv(entries));
}

ScoreList read_scores_tsv(const std::filesystem::path& path, std::string event_id,
                          std::string source) {
  const auto text = read_file(path);
  std::vector<ScoreEntry> entries;
  for (const auto& line : split(text, '\n')) {
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 2) throw DataError("malformed score line in " + path.string());
    entries.push_back({VideoId(std::string(trim(fields[0]))), parse_double(fields[1], path.string())});
  }
  return ScoreList(std::move(event_id), std::move(source), std::move(entries));
}

std::string format_ground_truth_csv(const GroundTruth& gt) {
  std::string out = "event_id,video_id,label\n";
  for (const auto& [id, split] : gt.splits()) {
    out += "*," + id.str() + "," + std::string(to_string(split)) + "\n";
  }
  for (const auto& [event, ids] : gt.all_positives()) {
    for (const auto& id : ids) out += event + "," + id.str() + ",positive\n";
  }
  return out;
}

GroundTruth parse_ground_truth_csv(std::string_view text) {
  GroundTruth gt;
  bool header = true;
  for (const auto& raw : split(text, '\n')) {
    auto line = trim(raw);
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.starts_with("event_id")) continue;
    }
    auto f = split(line, ',');
    if (f.size() != 3) throw DataError("malformed ground-truth line: " + std::string(line));
    const std::string event(trim(f[0]));
    VideoId id{std::string(trim(f[1]))};
    const auto label = trim(f[2]);
    if (label == "positive") {
      if (event == "*") throw DataError("positive row without an event id");
      gt.add_positive(event, id);
    } else {
      gt.set_split(id, parse_split(label));
    }
  }
  gt.validate();
  return gt;
}

GroundTruth read_ground_truth_csv(const std::filesystem::path& path) {
  return parse_ground_truth_csv(read_file(path));
}

namespace {
constexpr std::string_view kFeatureMagic = "CBVRFMX1";
}

std::string encode_feature_matrix(const FeatureMatrix& fm) {
  ByteWriter w;
  w.bytes(kFeatureMagic);
  w.u32(static_cast<std::uint32_t>(fm.size()));
  w.u32(static_cast<std::uint32_t>(fm.dim()));
  w.short_string(fm.name());
  for (const auto& id : fm.ids()) w.short_string(id.str());
  const auto& v = fm.values();
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) w.f32(v(i, j));
  return w.data();
}

FeatureMatrix decode_feature_matrix(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(kFeatureMagic.size()) != kFeatureMagic) throw DataError("bad feature-file magic");
  const auto n = r.u32();
  const auto d = r.u32();
  auto name = r.short_string();
  std::vector<VideoId> ids;
  ids.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) ids.emplace_back(r.short_string());
  RowMatrixF values(n, d);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < d; ++j) values(i, j) = r.f32();
  return FeatureMatrix(std::move(name), std::move(ids), std::move(values));
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& fm) {
  write_file_atomic(path, encode_feature_matrix(fm));
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  return decode_feature_matrix(read_file(path));
}

namespace {
constexpr std::string_view kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<std::uint8_t>(bytes[i]) << 16) |
                            (static_cast<std::uint8_t>(bytes[i + 1]) << 8) |
                            static_cast<std::uint8_t>(bytes[i + 2]);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = static_cast<std::uint8_t>(bytes[i]) << 16;
    if (rest == 2) v |= static_cast<std::uint8_t>(bytes[i + 1]) << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += rest == 2 ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::array<int, 256> lut{};
  lut.fill(-1);
  for (std::size_t i = 0; i < kB64.size(); ++i) lut[static_cast<unsigned char>(kB64[i])] = static_cast<int>(i);
  if (text.size() % 4 != 0) throw DataError("base64 length not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=') {
        ++pad;
        v <<= 6;
        continue;
      }
      const int x = lut[static_cast<unsigned char>(c)];
      if (x < 0 || pad > 0) throw DataError("invalid base64 input");
      v = (v << 6) | static_cast<std::uint32_t>(x);
    }
    out += static_cast<char>((v >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(v & 0xff);
  }
  return out;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  std::array<char, 17> buf{};
  std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf.data(), 16);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace cbvr::io
