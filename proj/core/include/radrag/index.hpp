#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "radrag/corpus.hpp"

namespace radrag {

inline constexpr double kUnitNormTolerance = 1e-5;

/// Dense float vector of fixed dimension. Values are finite; when flagged
/// normalized the L2 norm is 1 within kUnitNormTolerance.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<float> values, bool normalized = false);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  bool normalized() const noexcept { return normalized_; }
  float operator[](std::size_t i) const { return values_[i]; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<float> values_;
  bool normalized_;
};

double l2_norm(std::span<const float> v) noexcept;
double dot(std::span<const float> a, std::span<const float> b) noexcept;

/// Unit-L2 copy of `v`. Throws DegenerateVector for a zero vector.
EmbeddingVector normalize(const EmbeddingVector& v);

/// Row-major embedding matrix with one record id per row, as stored on disk.
struct EmbeddingSet {
  std::size_t dim = 0;
  bool normalized = false;
  std::vector<RecordId> record_ids;
  std::vector<float> matrix;  // record_ids.size() * dim

  std::size_t count() const noexcept { return record_ids.size(); }
  std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(matrix).subspan(i * dim, dim);
  }
  EmbeddingVector vector(std::size_t i) const;

  /// Throws DimMismatch unless every vector has the same dimension.
  static EmbeddingSet from_vectors(std::vector<RecordId> ids,
                                   const std::vector<EmbeddingVector>& vectors);
};

/// Binary layout: "EMB1", u32 count, u32 dim, u8 normalized, count*dim f32,
/// count u64 record ids; all little-endian.
void write_embeddings(const EmbeddingSet& set, std::ostream& out);
void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

/// Reads the binary layout, or JSON lines of {record_id, vector:[...]} when
/// the stream does not start with the magic bytes.
EmbeddingSet read_embeddings(std::istream& in);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

struct RetrievalResult {
  RecordId record_id = 0;
  double score = 0.0;
  std::size_t rank = 0;

  bool operator==(const RetrievalResult&) const = default;
};

/// Immutable exact dot-product index. Safe for concurrent queries.
class VectorIndex {
 public:
  /// Rows keep the order of `set`. With `normalize`, every row is scaled to
  /// unit length.
  static VectorIndex from_embeddings(EmbeddingSet set, bool normalize = true);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t count() const noexcept { return record_ids_.size(); }
  bool normalized() const noexcept { return normalized_; }
  const std::vector<RecordId>& record_ids() const noexcept { return record_ids_; }
  std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(matrix_).subspan(i * dim_, dim_);
  }

  /// Heap selection over a full scan. Results are ordered by score
  /// descending, then record id ascending.
  std::vector<RetrievalResult> top_k(const EmbeddingVector& query, std::size_t k) const;

  /// Reference path: scores every row, sorts everything, truncates.
  std::vector<RetrievalResult> top_k_bruteforce(const EmbeddingVector& query,
                                                std::size_t k) const;

  EmbeddingSet to_embedding_set() const;

 private:
  VectorIndex() = default;
  void check_query(const EmbeddingVector& query, std::size_t k) const;

  std::size_t dim_ = 0;
  bool normalized_ = false;
  std::vector<RecordId> record_ids_;
  std::vector<float> matrix_;
};

/// Aligns `embeddings` to the corpus order. Throws CorpusEmbeddingMismatch
/// unless the id sets are identical.
VectorIndex build_index(const Corpus& corpus, const EmbeddingSet& embeddings,
                        bool normalize = true);

}  // namespace radrag
