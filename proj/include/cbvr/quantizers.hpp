#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cbvr/core.hpp"
#include "cbvr/kernels.hpp"

namespace cbvr {

struct PqOptions {
  int d_sub = 8;
  int k = 256;
  std::uint64_t seed = 0;
  int max_iter = 25;
  /// Zero-pad d up to a multiple of d_sub instead of rejecting it.
  bool pad = false;
  /// Codebooks are trained on at most this many rows (seeded subsample).
  Eigen::Index train_sample = 100000;
};

/// m sub-quantizers, each with k centroids of length d_sub.
struct PqCodebook {
  int dim = 0;       // original d
  int pad_dims = 0;  // zeros appended before splitting
  int m = 0;
  int d_sub = 0;
  int k = 0;
  RowMatrixF centroids;  // (m * k) x d_sub; row s * k + c

  int padded_dim() const { return dim + pad_dims; }
  /// Bits of raw 32-bit input per bit of code.
  double compression_ratio() const { return 32.0 * dim / (8.0 * m); }
};

struct PqCodes {
  CodeMatrix codes;  // n x m
  std::vector<VideoId> ids;
};

PqCodebook pq_train(const FeatureMatrix& x, const PqOptions& options);
PqCodes pq_encode(const PqCodebook& cb, const FeatureMatrix& x);
FeatureMatrix pq_decode(const PqCodebook& cb, const PqCodes& codes, std::string feature_name = "pq");

/// Per-subblock lookup table LUT(s, c) = <w_s, centroid_{s,c}>.
RowMatrixD pq_lookup_table(std::span<const double> w, const PqCodebook& cb);
ScoreList pq_dot_scores(std::span<const double> w, double b, const PqCodebook& cb, const PqCodes& codes,
                        std::string event_id = "", std::string source = "pq");

enum class UqMode { MinMax, Quantile };

/// Per-dimension bins. Edges are stored explicitly (k + 1 per dimension), so
/// min/max and quantile modes share one representation.
struct UqModel {
  int k = 2;
  UqMode mode = UqMode::MinMax;
  RowMatrixF edges;  // d x (k + 1), non-decreasing per row

  int dim() const { return static_cast<int>(edges.rows()); }
  int bits() const;
  float lo(int j) const { return edges(j, 0); }
  float hi(int j) const { return edges(j, k); }
  double compression_ratio() const { return 32.0 / bits(); }
};

UqModel uq_train(const FeatureMatrix& x, int k, UqMode mode = UqMode::MinMax);
CodeMatrix uq_encode(const UqModel& model, const FeatureMatrix& x);
FeatureMatrix uq_decode(const UqModel& model, const CodeMatrix& codes, std::vector<VideoId> ids,
                        std::string feature_name = "uq");

enum class Codec : std::uint8_t { PQ = 1, UQ = 2 };

/// Codebook plus codes for one feature, as persisted on disk.
struct CompressedIndex {
  Codec codec = Codec::PQ;
  PqCodebook pq;
  UqModel uq;
  CodeMatrix codes;  // PQ: n x m; UQ: n x d (unpacked)
  std::vector<VideoId> ids;

  Eigen::Index size() const { return codes.rows(); }
  int dim() const { return codec == Codec::PQ ? pq.dim : uq.dim(); }
  FeatureMatrix decode(std::string feature_name = "decoded") const;
};

CompressedIndex make_pq_index(PqCodebook cb, PqCodes codes);
CompressedIndex make_uq_index(UqModel model, CodeMatrix codes, std::vector<VideoId> ids);

class IndexFormatError : public DataError {
 public:
  enum class Code { BadMagic, BadVersion, BadCodec, Truncated, Corrupt };
  IndexFormatError(Code code, const std::string& what) : DataError(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

std::string encode_index(const CompressedIndex& index);
CompressedIndex decode_index(std::string_view bytes);
void index_write(const std::filesystem::path& path, const CompressedIndex& index);
CompressedIndex index_read(const std::filesystem::path& path);

}  // namespace cbvr
