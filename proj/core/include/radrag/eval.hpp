#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "radrag/corpus.hpp"
#include "radrag/index.hpp"

namespace radrag {

class TokenEmbedder {
 public:
  virtual ~TokenEmbedder() = default;
  /// One vector per token, in token order.
  virtual std::vector<EmbeddingVector> embed_tokens(std::string_view text) const = 0;
  virtual bool supports_concurrency() const { return true; }
};

class ReportEmbedder {
 public:
  virtual ~ReportEmbedder() = default;
  virtual EmbeddingVector embed_report(std::string_view text) const = 0;
  virtual bool supports_concurrency() const { return true; }
};

class EntityExtractor {
 public:
  virtual ~EntityExtractor() = default;
  virtual std::set<std::string> extract(std::string_view text) const = 0;
  virtual bool supports_concurrency() const { return true; }
};

/// Lowercased alphanumeric runs.
std::vector<std::string> word_tokens(std::string_view text);

/// Counts of hashed word tokens in `dim` buckets (FNV-1a).
class HashedBagOfWordsEmbedder final : public ReportEmbedder {
 public:
  explicit HashedBagOfWordsEmbedder(std::size_t dim = 1u << 16) : dim_(dim) {}
  EmbeddingVector embed_report(std::string_view text) const override;
  std::size_t bucket(std::string_view token) const noexcept;

 private:
  std::size_t dim_;
};

/// Each distinct word maps to a fixed pseudo-random vector seeded by its hash.
class HashTokenEmbedder final : public TokenEmbedder {
 public:
  explicit HashTokenEmbedder(std::size_t dim = 64) : dim_(dim) {}
  std::vector<EmbeddingVector> embed_tokens(std::string_view text) const override;
  EmbeddingVector embed_word(std::string_view token) const;

 private:
  std::size_t dim_;
};

/// Set of distinct lowercase word tokens.
class TokenSetExtractor final : public EntityExtractor {
 public:
  std::set<std::string> extract(std::string_view text) const override;
};

/// Vocabulary terms (whole words or phrases) found in the text, lowercase.
class VocabEntityExtractor final : public EntityExtractor {
 public:
  explicit VocabEntityExtractor(std::vector<std::string> terms);
  std::set<std::string> extract(std::string_view text) const override;

 private:
  std::vector<std::vector<std::string>> terms_;
};

/// Precomputed token embeddings keyed by record id; rows sharing a record id
/// are that text's tokens in order. Lookups go through the text registered
/// for the id.
class SidecarTokenEmbedder final : public TokenEmbedder {
 public:
  void add(const EmbeddingSet& rows, const std::map<RecordId, std::string>& texts);
  std::vector<EmbeddingVector> embed_tokens(std::string_view text) const override;

 private:
  std::unordered_map<std::string, std::vector<EmbeddingVector>> by_text_;
};

class SidecarReportEmbedder final : public ReportEmbedder {
 public:
  void add(const EmbeddingSet& rows, const std::map<RecordId, std::string>& texts);
  EmbeddingVector embed_report(std::string_view text) const override;

 private:
  std::unordered_map<std::string, EmbeddingVector> by_text_;
};

/// Entity file: JSON lines of {record_id, entities:[...]}.
class SidecarEntityExtractor final : public EntityExtractor {
 public:
  void add(const std::filesystem::path& path, const std::map<RecordId, std::string>& texts);
  void add(std::map<RecordId, std::set<std::string>> entities,
           const std::map<RecordId, std::string>& texts);
  std::set<std::string> extract(std::string_view text) const override;

 private:
  std::unordered_map<std::string, std::set<std::string>> by_text_;
};

/// a.b / (|a||b|). Throws DimMismatch or DegenerateVector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Greedy max-cosine matching without IDF weighting or baseline rescaling.
BertScore bertscore(std::span<const EmbeddingVector> pred, std::span<const EmbeddingVector> ref);
BertScore bertscore(std::string_view pred_text, std::string_view ref_text,
                    const TokenEmbedder& embedder);

double s_emb(std::string_view pred_text, std::string_view ref_text, const ReportEmbedder& embedder);

/// Both empty: 1. Exactly one empty: 0.
double entity_f1(const std::set<std::string>& pred, const std::set<std::string>& ref);

struct HallucinationReport {
  std::vector<double> scores;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double fraction_above = 0.0;  // strictly above threshold
  double threshold = 0.70;
};

inline constexpr double kDefaultHallucinationThreshold = 0.70;

struct GenerationWithContext {
  std::string generation;
  std::vector<std::string> context;  // joined with single spaces for scoring
};

HallucinationReport summarize_hallucination(std::vector<double> scores, double threshold);
HallucinationReport hallucination_report(std::span<const GenerationWithContext> records,
                                         const ReportEmbedder& embedder,
                                         double threshold = kDefaultHallucinationThreshold);

struct EvalScores {
  double bertscore_precision = 0.0;
  double bertscore_recall = 0.0;
  double bertscore_f1 = 0.0;
  double s_emb = 0.0;
  double entity_f1 = 0.0;
};

struct RecordEvaluation {
  RecordId id = 0;
  EvalScores scores;
  std::optional<double> hallucination_s_emb;
};

struct RunEvaluation {
  std::vector<RecordEvaluation> records;  // ascending id
  EvalScores mean;
  std::optional<HallucinationReport> hallucination;
};

struct Evaluators {
  const TokenEmbedder& tokens;
  const ReportEmbedder& reports;
  const EntityExtractor& entities;
  /// Scores the hallucination block against this embedder when contexts are
  /// given; defaults to `reports`.
  const ReportEmbedder* context_reports = nullptr;
};

/// Scores every prediction against its reference. Throws AlignmentError
/// naming the ids present on only one side. Records run in parallel on up to
/// `threads` threads when all evaluators support it.
RunEvaluation evaluate_run(const std::map<RecordId, std::string>& predictions,
                           const std::map<RecordId, std::string>& references,
                           const std::map<RecordId, std::vector<std::string>>* contexts,
                           const Evaluators& evaluators,
                           double threshold = kDefaultHallucinationThreshold,
                           std::size_t threads = 1);

/// Machine-readable results: JSON with per-record rows, means and the
/// hallucination block; CSV with one row per record plus a "mean" row.
void write_results_json(const RunEvaluation& run, std::ostream& out);
void write_results_csv(const RunEvaluation& run, std::ostream& out);

}  // namespace radrag
