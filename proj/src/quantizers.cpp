#include "cbvr/quantizers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

#include "cbvr/encoders.hpp"
#include "cbvr/io.hpp"

namespace cbvr {

namespace {

// Row indices of a seeded subsample, ascending.
std::vector<Eigen::Index> subsample_rows(Eigen::Index n, Eigen::Index cap, std::uint64_t seed) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  if (n <= cap) return rows;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(static_cast<std::size_t>(cap));
  std::sort(rows.begin(), rows.end());
  return rows;
}

RowMatrixD subblock(const RowMatrixF& values, std::span<const Eigen::Index> rows, int s, int d_sub,
                    int dim) {
  RowMatrixD out(static_cast<Eigen::Index>(rows.size()), d_sub);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d_sub; ++j) {
      const int col = s * d_sub + j;
      out(static_cast<Eigen::Index>(i), j) = col < dim ? values(rows[i], col) : 0.0;
    }
  }
  return out;
}

RowMatrixD centroids_of(const PqCodebook& cb, int s) {
  return cb.centroids.middleRows(static_cast<Eigen::Index>(s) * cb.k, cb.k).cast<double>();
}

}  // namespace

PqCodebook pq_train(const FeatureMatrix& x, const PqOptions& o) {
  if (o.d_sub < 1) throw ConfigError("PQ: d_sub must be >= 1");
  if (o.k < 1 || o.k > 256) throw ConfigError("PQ: k must be in [1, 256]");
  const int d = static_cast<int>(x.dim());
  int pad = 0;
  if (d % o.d_sub != 0) {
    if (!o.pad) {
      throw ConfigError("PQ: d=" + std::to_string(d) + " not divisible by d_sub=" +
                        std::to_string(o.d_sub) + "; pad or choose divisor");
    }
    pad = o.d_sub - d % o.d_sub;
  }
  if (x.size() < o.k) {
    throw DataError("PQ: " + std::to_string(x.size()) + " rows < k=" + std::to_string(o.k));
  }
  PqCodebook cb;
  cb.dim = d;
  cb.pad_dims = pad;
  cb.d_sub = o.d_sub;
  cb.k = o.k;
  cb.m = (d + pad) / o.d_sub;
  cb.centroids.resize(static_cast<Eigen::Index>(cb.m) * cb.k, cb.d_sub);
  const auto rows = subsample_rows(x.size(), std::max<Eigen::Index>(o.train_sample, o.k), o.seed);
  for (int s = 0; s < cb.m; ++s) {
    const RowMatrixD sub = subblock(x.values(), rows, s, cb.d_sub, d);
    const auto km = kmeans_fit(sub, cb.k, o.seed + static_cast<std::uint64_t>(s), o.max_iter);
    cb.centroids.middleRows(static_cast<Eigen::Index>(s) * cb.k, cb.k) = km.codebook.centroids.cast<float>();
  }
  return cb;
}

PqCodes pq_encode(const PqCodebook& cb, const FeatureMatrix& x) {
  if (x.dim() != cb.dim) {
    throw DataError("PQ: feature dimension " + std::to_string(x.dim()) + " != codebook dimension " +
                    std::to_string(cb.dim));
  }
  PqCodes out;
  out.ids = x.ids();
  out.codes.resize(x.size(), cb.m);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.size()));
  std::iota(rows.begin(), rows.end(), 0);
  for (int s = 0; s < cb.m; ++s) {
    const auto a = kernels::assign_nearest(subblock(x.values(), rows, s, cb.d_sub, cb.dim), centroids_of(cb, s));
    for (Eigen::Index i = 0; i < x.size(); ++i) out.codes(i, s) = static_cast<std::uint8_t>(a.index[i]);
  }
  return out;
}

FeatureMatrix pq_decode(const PqCodebook& cb, const PqCodes& codes, std::string feature_name) {
  if (codes.codes.cols() != cb.m) throw IndexFormatError(IndexFormatError::Code::Corrupt, "corrupt index");
  RowMatrixF out(codes.codes.rows(), cb.dim);
  for (Eigen::Index i = 0; i < codes.codes.rows(); ++i) {
    for (int s = 0; s < cb.m; ++s) {
      const int c = codes.codes(i, s);
      if (c >= cb.k) throw IndexFormatError(IndexFormatError::Code::Corrupt, "corrupt index");
      for (int j = 0; j < cb.d_sub; ++j) {
        const int col = s * cb.d_sub + j;
        if (col < cb.dim) out(i, col) = cb.centroids(static_cast<Eigen::Index>(s) * cb.k + c, j);
      }
    }
  }
  return FeatureMatrix(std::move(feature_name), codes.ids, std::move(out));
}

RowMatrixD pq_lookup_table(std::span<const double> w, const PqCodebook& cb) {
  if (static_cast<int>(w.size()) != cb.dim) {
    throw DataError("PQ scoring: weight dimension " + std::to_string(w.size()) + " != " + std::to_string(cb.dim));
  }
  RowMatrixD lut(cb.m, cb.k);
  for (int s = 0; s < cb.m; ++s) {
    for (int c = 0; c < cb.k; ++c) {
      double acc = 0.0;
      for (int j = 0; j < cb.d_sub; ++j) {
        const int col = s * cb.d_sub + j;
        if (col < cb.dim) acc += w[col] * static_cast<double>(cb.centroids(static_cast<Eigen::Index>(s) * cb.k + c, j));
      }
      lut(s, c) = acc;
    }
  }
  return lut;
}

ScoreList pq_dot_scores(std::span<const double> w, double b, const PqCodebook& cb, const PqCodes& codes,
                        std::string event_id, std::string source) {
  if (codes.codes.cols() != cb.m) throw DataError("PQ scoring: code width mismatch");
  const auto lut = pq_lookup_table(w, cb);
  for (Eigen::Index i = 0; i < codes.codes.rows(); ++i)
    for (int s = 0; s < cb.m; ++s)
      if (codes.codes(i, s) >= cb.k) throw IndexFormatError(IndexFormatError::Code::Corrupt, "corrupt index");
  const auto scores = kernels::lut_scores(codes.codes, lut, b);
  std::vector<ScoreEntry> entries(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) entries[i] = {codes.ids[i], scores[i]};
  return ScoreList(std::move(event_id), std::move(source), std::move(entries));
}

int UqModel::bits() const { return std::countr_zero(static_cast<unsigned>(k)); }

UqModel uq_train(const FeatureMatrix& x, int k, UqMode mode) {
  if (k < 2 || k > 256 || !std::has_single_bit(static_cast<unsigned>(k))) {
    throw ConfigError("UQ: k must be a power of two in [2, 256]");
  }
  if (x.size() < 1) throw DataError("UQ: no rows");
  UqModel m;
  m.k = k;
  m.mode = mode;
  const Eigen::Index d = x.dim();
  m.edges.resize(d, k + 1);
  std::vector<float> col(static_cast<std::size_t>(x.size()));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < x.size(); ++i) col[i] = x.values()(i, j);
    std::sort(col.begin(), col.end());
    const float lo = col.front();
    const float hi = col.back();
    for (int b = 0; b <= k; ++b) {
      if (mode == UqMode::MinMax) {
        m.edges(j, b) = b == k ? hi : static_cast<float>(lo + (static_cast<double>(hi) - lo) * b / k);
      } else {
        const auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(b) * (col.size() - 1) / k));
        m.edges(j, b) = col[pos];
      }
    }
  }
  return m;
}

CodeMatrix uq_encode(const UqModel& m, const FeatureMatrix& x) {
  if (x.dim() != m.dim()) throw DataError("UQ: dimension mismatch");
  CodeMatrix codes(x.size(), x.dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (Eigen::Index j = 0; j < x.dim(); ++j) {
      const float v = x.values()(i, j);
      const float* e = m.edges.data() + j * (m.k + 1);
      int bin = 0;
      if (e[m.k] > e[0]) {
        // Largest b with e[b] <= v, clamped into [0, k-1]; v >= hi lands in the top bin.
        bin = static_cast<int>(std::upper_bound(e + 1, e + m.k, v) - (e + 1));
      }
      codes(i, j) = static_cast<std::uint8_t>(bin);
    }
  }
  return codes;
}

FeatureMatrix uq_decode(const UqModel& m, const CodeMatrix& codes, std::vector<VideoId> ids,
                        std::string feature_name) {
  if (codes.cols() != m.dim()) throw IndexFormatError(IndexFormatError::Code::Corrupt, "corrupt index");
  RowMatrixF out(codes.rows(), codes.cols());
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    for (Eigen::Index j = 0; j < codes.cols(); ++j) {
      const int c = codes(i, j);
      if (c >= m.k) throw IndexFormatError(IndexFormatError::Code::Corrupt, "corrupt index");
      out(i, j) = static_cast<float>(0.5 * (static_cast<double>(m.edges(j, c)) + m.edges(j, c + 1)));
    }
  }
  return FeatureMatrix(std::move(feature_name), std::move(ids), std::move(out));
}

FeatureMatrix CompressedIndex::decode(std::string feature_name) const {
  if (codec == Codec::PQ) return pq_decode(pq, PqCodes{codes, ids}, std::move(feature_name));
  return uq_decode(uq, codes, ids, std::move(feature_name));
}

CompressedIndex make_pq_index(PqCodebook cb, PqCodes codes) {
  CompressedIndex idx;
  idx.codec = Codec::PQ;
  idx.pq = std::move(cb);
  idx.codes = std::move(codes.codes);
  idx.ids = std::move(codes.ids);
  return idx;
}

CompressedIndex make_uq_index(UqModel model, CodeMatrix codes, std::vector<VideoId> ids) {
  CompressedIndex idx;
  idx.codec = Codec::UQ;
  idx.uq = std::move(model);
  idx.codes = std::move(codes);
  idx.ids = std::move(ids);
  return idx;
}

namespace {

constexpr std::string_view kIndexMagic = "CBVRIDX1";
constexpr std::uint16_t kIndexVersion = 1;

std::size_t packed_row_bytes(int d, int bits) { return (static_cast<std::size_t>(d) * bits + 7) / 8; }

}  // namespace

std::string encode_index(const CompressedIndex& idx) {
  if (static_cast<std::size_t>(idx.codes.rows()) != idx.ids.size()) {
    throw DataError("index: " + std::to_string(idx.ids.size()) + " ids for " +
                    std::to_string(idx.codes.rows()) + " code rows");
  }
  io::ByteWriter w;
  w.bytes(kIndexMagic);
  w.u16(kIndexVersion);
  w.u8(static_cast<std::uint8_t>(idx.codec));
  w.u32(static_cast<std::uint32_t>(idx.codes.rows()));
  if (idx.codec == Codec::PQ) {
    const auto& cb = idx.pq;
    if (idx.codes.cols() != cb.m) throw DataError("index: code width does not match codebook");
    w.u32(static_cast<std::uint32_t>(cb.dim));
    w.u32(static_cast<std::uint32_t>(cb.m));
    w.u32(static_cast<std::uint32_t>(cb.d_sub));
    w.u32(static_cast<std::uint32_t>(cb.k));
    w.u32(static_cast<std::uint32_t>(cb.pad_dims));
    for (Eigen::Index r = 0; r < cb.centroids.rows(); ++r)
      for (Eigen::Index c = 0; c < cb.centroids.cols(); ++c) w.f32(cb.centroids(r, c));
    for (Eigen::Index i = 0; i < idx.codes.rows(); ++i)
      for (Eigen::Index s = 0; s < idx.codes.cols(); ++s) w.u8(idx.codes(i, s));
  } else {
    const auto& m = idx.uq;
    const int d = m.dim();
    if (idx.codes.cols() != d) throw DataError("index: code width does not match UQ model");
    w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(d));  // one sub-quantizer per dimension
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(m.k));
    w.u32(0);
    for (Eigen::Index r = 0; r < m.edges.rows(); ++r)
      for (Eigen::Index c = 0; c < m.edges.cols(); ++c) w.f32(m.edges(r, c));
    const int bits = m.bits();
    std::string row(packed_row_bytes(d, bits), '\0');
    for (Eigen::Index i = 0; i < idx.codes.rows(); ++i) {
      std::fill(row.begin(), row.end(), '\0');
      for (int j = 0; j < d; ++j) {
        const std::size_t bit = static_cast<std::size_t>(j) * bits;
        const unsigned v = idx.codes(i, j);
        for (int b = 0; b < bits; ++b) {
          if (v & (1u << b)) row[(bit + b) / 8] = static_cast<char>(row[(bit + b) / 8] | (1 << ((bit + b) % 8)));
        }
      }
      w.bytes(row);
    }
  }
  w.u32(static_cast<std::uint32_t>(idx.ids.size()));
  for (const auto& id : idx.ids) w.short_string(id.str());
  return w.data();
}

CompressedIndex decode_index(std::string_view bytes) {
  using Code = IndexFormatError::Code;
  if (bytes.size() < kIndexMagic.size()) {
    throw IndexFormatError(bytes == kIndexMagic.substr(0, bytes.size()) ? Code::Truncated : Code::BadMagic,
                           bytes == kIndexMagic.substr(0, bytes.size()) ? "truncated index" : "bad magic");
  }
  if (bytes.substr(0, kIndexMagic.size()) != kIndexMagic) throw IndexFormatError(Code::BadMagic, "bad magic");
  try {
    io::ByteReader r(bytes.substr(kIndexMagic.size()));
    const auto version = r.u16();
    if (version != kIndexVersion) {
      throw IndexFormatError(Code::BadVersion, "unsupported index version " + std::to_string(version));
    }
    const auto codec = r.u8();
    if (codec != 1 && codec != 2) throw IndexFormatError(Code::BadCodec, "unknown codec " + std::to_string(codec));
    const auto n = r.u32();
    const auto d = r.u32();
    const auto m = r.u32();
    const auto d_sub = r.u32();
    const auto k = r.u32();
    const auto pad = r.u32();
    CompressedIndex idx;
    idx.codec = static_cast<Codec>(codec);
    if (k < 1 || k > 256 || d_sub < 1) throw IndexFormatError(Code::Corrupt, "corrupt index");
    if (idx.codec == Codec::PQ) {
      if (static_cast<std::uint64_t>(m) * d_sub != static_cast<std::uint64_t>(d) + pad) {
        throw IndexFormatError(Code::Corrupt, "corrupt index");
      }
      auto& cb = idx.pq;
      cb.dim = static_cast<int>(d);
      cb.m = static_cast<int>(m);
      cb.d_sub = static_cast<int>(d_sub);
      cb.k = static_cast<int>(k);
      cb.pad_dims = static_cast<int>(pad);
      cb.centroids.resize(static_cast<Eigen::Index>(m) * k, d_sub);
      for (Eigen::Index row = 0; row < cb.centroids.rows(); ++row)
        for (Eigen::Index c = 0; c < cb.centroids.cols(); ++c) cb.centroids(row, c) = r.f32();
      idx.codes.resize(n, m);
      for (std::uint32_t i = 0; i < n; ++i) {
        const auto row = r.bytes(m);
        for (std::uint32_t s = 0; s < m; ++s) {
          const auto c = static_cast<std::uint8_t>(row[s]);
          if (c >= k) throw IndexFormatError(Code::Corrupt, "corrupt index");
          idx.codes(i, s) = c;
        }
      }
    } else {
      if (!std::has_single_bit(k) || k < 2 || m != d || d_sub != 1) throw IndexFormatError(Code::Corrupt, "corrupt index");
      auto& um = idx.uq;
      um.k = static_cast<int>(k);
      um.edges.resize(d, k + 1);
      for (Eigen::Index row = 0; row < um.edges.rows(); ++row)
        for (Eigen::Index c = 0; c < um.edges.cols(); ++c) um.edges(row, c) = r.f32();
      const int bits = um.bits();
      idx.codes.resize(n, d);
      for (std::uint32_t i = 0; i < n; ++i) {
        const auto row = r.bytes(packed_row_bytes(static_cast<int>(d), bits));
        for (std::uint32_t j = 0; j < d; ++j) {
          unsigned v = 0;
          const std::size_t bit = static_cast<std::size_t>(j) * bits;
          for (int b = 0; b < bits; ++b) {
            if (static_cast<std::uint8_t>(row[(bit + b) / 8]) & (1u << ((bit + b) % 8))) v |= 1u << b;
          }
          idx.codes(i, j) = static_cast<std::uint8_t>(v);
        }
      }
    }
    const auto count = r.u32();
    if (count != n) throw IndexFormatError(Code::Corrupt, "corrupt index");
    idx.ids.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) idx.ids.emplace_back(r.short_string());
    if (r.remaining() != 0) throw IndexFormatError(Code::Corrupt, "corrupt index (trailing bytes)");
    return idx;
  } catch (const io::ByteReader::Truncated&) {
    throw IndexFormatError(Code::Truncated, "truncated index");
  }
}

void index_write(const std::filesystem::path& path, const CompressedIndex& index) {
  io::write_file_atomic(path, encode_index(index));
}

CompressedIndex index_read(const std::filesystem::path& path) { return decode_index(io::read_file(path)); }

}  // namespace cbvr
