#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace radrag {

using RecordId = std::uint64_t;

enum class Level { Report, Sentence };

std::string_view to_string(Level level) noexcept;
Level parse_level(std::string_view text);

struct CorpusRecord {
  RecordId record_id = 0;
  std::string study_id;
  Level level = Level::Report;
  std::string text;
  std::optional<RecordId> parent_report_id;  // set iff level == Sentence

  bool operator==(const CorpusRecord&) const = default;
};

/// An ordered, immutable collection of records that all share one level.
///
/// Construction validates the record invariants: non-blank text, parent id
/// present exactly for sentences, unique record ids, uniform level.
class Corpus {
 public:
  Corpus(Level level, std::vector<CorpusRecord> records);

  Level level() const noexcept { return level_; }
  std::size_t count() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::vector<CorpusRecord>& records() const noexcept { return records_; }
  const CorpusRecord& operator[](std::size_t i) const { return records_[i]; }

  /// nullptr when the id is not in the corpus.
  const CorpusRecord* find(RecordId id) const noexcept;

  bool operator==(const Corpus& other) const {
    return level_ == other.level_ && records_ == other.records_;
  }

 private:
  Level level_;
  std::vector<CorpusRecord> records_;
  std::unordered_map<RecordId, std::size_t> by_id_;
};

struct IngestStats {
  std::size_t lines_read = 0;
  std::size_t blank_skipped = 0;  // records whose text was blank
};

/// Collapses whitespace runs to a single space and trims both ends.
std::string normalize_whitespace(std::string_view text);

/// Reads one report per line. A line is either a JSON object carrying
/// `study_id` and `text` (or `impression`), or `study_id<TAB>text`.
/// Empty lines are ignored; records with blank text are skipped and counted.
Corpus ingest_reports(std::istream& in, IngestStats* stats = nullptr);
Corpus ingest_reports(const std::filesystem::path& path, IngestStats* stats = nullptr);

/// Splits report text on `.`, `!` or `?` followed by whitespace or end of
/// text. "Dr." / "vs." style abbreviations and digit-period-space-digit
/// measurements ("3. 5 cm") do not end a sentence.
std::vector<std::string> split_sentences(std::string_view text);

Corpus sentence_split(const Corpus& reports);

/// Keeps the first record for each whitespace-normalized text
/// (case-sensitive). Surviving records carry the normalized text and keep
/// their original ids.
Corpus dedupe(const Corpus& corpus);

/// Line-delimited JSON, one object per record.
void save_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace radrag
