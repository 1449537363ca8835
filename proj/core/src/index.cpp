#include "radrag/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "radrag/error.hpp"

namespace radrag {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw Error(ErrorCode::FormatError, "truncated embedding file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

// Orders (score desc, id asc); `a` precedes `b` in a result list.
bool ranks_before(double score_a, RecordId id_a, double score_b, RecordId id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

void check_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "embedding has non-finite value");
  }
}

EmbeddingSet read_jsonl(std::istream& in) {
  std::vector<RecordId> ids;
  std::vector<EmbeddingVector> vectors;
  bool all_normalized = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      ids.push_back(obj.at("record_id").get<RecordId>());
      const bool flagged = obj.value("normalized", false);
      all_normalized = all_normalized && flagged;
      vectors.emplace_back(obj.at("vector").get<std::vector<float>>(), flagged);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError,
                  "embedding line " + std::to_string(line_no) + ": " + e.what(),
                  std::to_string(line_no));
    }
  }
  auto set = EmbeddingSet::from_vectors(std::move(ids), vectors);
  set.normalized = !vectors.empty() && all_normalized;
  return set;
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<float> values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
  if (values_.empty()) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be positive");
  check_finite(values_);
  if (normalized_ && std::abs(l2_norm(values_) - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::InvalidArgument, "vector flagged normalized does not have unit norm");
  }
}

double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double l2_norm(std::span<const float> v) noexcept { return std::sqrt(dot(v, v)); }

EmbeddingVector normalize(const EmbeddingVector& v) {
  const double norm = l2_norm(v.values());
  if (norm == 0.0) throw Error(ErrorCode::DegenerateVector, "cannot normalize a zero vector");
  std::vector<float> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return EmbeddingVector(std::move(out), true);
}

EmbeddingVector EmbeddingSet::vector(std::size_t i) const {
  auto r = row(i);
  return EmbeddingVector(std::vector<float>(r.begin(), r.end()), normalized);
}

EmbeddingSet EmbeddingSet::from_vectors(std::vector<RecordId> ids,
                                        const std::vector<EmbeddingVector>& vectors) {
  if (ids.size() != vectors.size()) {
    throw Error(ErrorCode::CorpusEmbeddingMismatch, "id count differs from vector count");
  }
  EmbeddingSet set;
  set.record_ids = std::move(ids);
  set.normalized = !vectors.empty();
  if (!vectors.empty()) set.dim = vectors.front().dim();
  set.matrix.reserve(set.dim * vectors.size());
  for (const auto& v : vectors) {
    if (v.dim() != set.dim) {
      throw Error(ErrorCode::DimMismatch, "embedding dims " + std::to_string(set.dim) + " and " +
                                              std::to_string(v.dim()) + " in one set");
    }
    set.normalized = set.normalized && v.normalized();
    set.matrix.insert(set.matrix.end(), v.values().begin(), v.values().end());
  }
  return set;
}

void write_embeddings(const EmbeddingSet& set, std::ostream& out) {
  if (set.matrix.size() != set.count() * set.dim) {
    throw Error(ErrorCode::InvalidArgument, "embedding matrix size does not match count*dim");
  }
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.count()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.dim));
  put_le<std::uint8_t>(out, set.normalized ? 1 : 0);
  for (float v : set.matrix) put_le<float>(out, v);
  for (RecordId id : set.record_ids) put_le<std::uint64_t>(out, id);
}

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string(), path.string());
  write_embeddings(set, out);
}

EmbeddingSet read_embeddings(std::istream& in) {
  char magic[4] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() < 4 || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    in.clear();
    in.seekg(0);
    return read_jsonl(in);
  }
  EmbeddingSet set;
  const auto count = get_le<std::uint32_t>(in);
  set.dim = get_le<std::uint32_t>(in);
  const auto flag = get_le<std::uint8_t>(in);
  if (flag > 1) throw Error(ErrorCode::FormatError, "bad normalized flag in embedding header");
  set.normalized = flag == 1;
  if (count > 0 && set.dim == 0) throw Error(ErrorCode::FormatError, "zero dim with rows");
  set.matrix.resize(static_cast<std::size_t>(count) * set.dim);
  for (auto& v : set.matrix) v = get_le<float>(in);
  set.record_ids.resize(count);
  for (auto& id : set.record_ids) id = get_le<std::uint64_t>(in);
  check_finite(set.matrix);
  return set;
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  return read_embeddings(in);
}

VectorIndex VectorIndex::from_embeddings(EmbeddingSet set, bool normalize) {
  if (set.matrix.size() != set.count() * set.dim) {
    throw Error(ErrorCode::InvalidArgument, "embedding matrix size does not match count*dim");
  }
  std::unordered_set<RecordId> seen;
  for (RecordId id : set.record_ids) {
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate record_id " + std::to_string(id),
                  std::to_string(id));
    }
  }
  VectorIndex index;
  index.dim_ = set.dim;
  index.record_ids_ = std::move(set.record_ids);
  index.matrix_ = std::move(set.matrix);
  if (normalize) {
    for (std::size_t i = 0; i < index.count(); ++i) {
      std::span<float> r(index.matrix_.data() + i * index.dim_, index.dim_);
      const double norm = l2_norm(r);
      if (norm == 0.0) {
        throw Error(ErrorCode::DegenerateVector,
                    "record " + std::to_string(index.record_ids_[i]) + " has a zero embedding",
                    std::to_string(index.record_ids_[i]));
      }
      for (auto& v : r) v = static_cast<float>(v / norm);
    }
    index.normalized_ = true;
  } else {
    for (std::size_t i = 0; set.normalized && i < index.count(); ++i) {
      if (std::abs(l2_norm(index.row(i)) - 1.0) > kUnitNormTolerance) {
        throw Error(ErrorCode::FormatError,
                    "row " + std::to_string(i) + " flagged normalized but not unit length");
      }
    }
    index.normalized_ = set.normalized;
  }
  return index;
}

void VectorIndex::check_query(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (query.dim() != dim_) {
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(query.dim()) +
                                            " vs index dim " + std::to_string(dim_));
  }
}

std::vector<RetrievalResult> VectorIndex::top_k(const EmbeddingVector& query,
                                                std::size_t k) const {
  check_query(query, k);
  k = std::min(k, count());

  struct Entry {
    double score;
    RecordId id;
  };
  // Heap top is the weakest retained entry.
  auto weaker_on_top = [](const Entry& a, const Entry& b) {
    return ranks_before(a.score, a.id, b.score, b.id);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(weaker_on_top)> heap(weaker_on_top);

  const auto q = query.values();
  for (std::size_t i = 0; i < count(); ++i) {
    const Entry e{dot(row(i), q), record_ids_[i]};
    if (heap.size() < k) {
      heap.push(e);
    } else if (ranks_before(e.score, e.id, heap.top().score, heap.top().id)) {
      heap.pop();
      heap.push(e);
    }
  }

  std::vector<RetrievalResult> out(heap.size());
  for (std::size_t r = heap.size(); r-- > 0;) {
    out[r] = {heap.top().id, heap.top().score, r};
    heap.pop();
  }
  return out;
}

std::vector<RetrievalResult> VectorIndex::top_k_bruteforce(const EmbeddingVector& query,
                                                           std::size_t k) const {
  check_query(query, k);
  std::vector<RetrievalResult> all;
  all.reserve(count());
  for (std::size_t i = 0; i < count(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      s += static_cast<double>(matrix_[i * dim_ + d]) * query[d];
    }
    all.push_back({record_ids_[i], s, 0});
  }
  std::sort(all.begin(), all.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
    return ranks_before(a.score, a.record_id, b.score, b.record_id);
  });
  all.resize(std::min(k, all.size()));
  for (std::size_t r = 0; r < all.size(); ++r) all[r].rank = r;
  return all;
}

EmbeddingSet VectorIndex::to_embedding_set() const {
  EmbeddingSet set;
  set.dim = dim_;
  set.normalized = normalized_;
  set.record_ids = record_ids_;
  set.matrix = matrix_;
  return set;
}

VectorIndex build_index(const Corpus& corpus, const EmbeddingSet& embeddings, bool normalize) {
  if (embeddings.count() != corpus.count()) {
    throw Error(ErrorCode::CorpusEmbeddingMismatch,
                std::to_string(corpus.count()) + " records but " +
                    std::to_string(embeddings.count()) + " embeddings");
  }
  if (embeddings.matrix.size() != embeddings.count() * embeddings.dim) {
    throw Error(ErrorCode::DimMismatch, "embedding matrix size does not match count*dim");
  }
  std::unordered_map<RecordId, std::size_t> row_of;
  row_of.reserve(embeddings.count());
  for (std::size_t i = 0; i < embeddings.count(); ++i) {
    if (!row_of.emplace(embeddings.record_ids[i], i).second) {
      throw Error(ErrorCode::CorpusEmbeddingMismatch,
                  "duplicate embedding id " + std::to_string(embeddings.record_ids[i]),
                  std::to_string(embeddings.record_ids[i]));
    }
  }
  EmbeddingSet aligned;
  aligned.dim = embeddings.dim;
  aligned.normalized = embeddings.normalized;
  aligned.record_ids.reserve(corpus.count());
  aligned.matrix.reserve(embeddings.matrix.size());
  for (const auto& rec : corpus.records()) {
    auto it = row_of.find(rec.record_id);
    if (it == row_of.end()) {
      throw Error(ErrorCode::CorpusEmbeddingMismatch,
                  "no embedding for record " + std::to_string(rec.record_id),
                  std::to_string(rec.record_id));
    }
    aligned.record_ids.push_back(rec.record_id);
    auto r = embeddings.row(it->second);
    aligned.matrix.insert(aligned.matrix.end(), r.begin(), r.end());
  }
  return VectorIndex::from_embeddings(std::move(aligned), normalize);
}

}  // namespace radrag
