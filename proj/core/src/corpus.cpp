#include "radrag/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "radrag/error.hpp"

namespace radrag {

namespace {

using nlohmann::json;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

constexpr std::array<std::string_view, 9> kAbbreviations = {
    "dr", "vs", "mr", "mrs", "ms", "e.g", "i.e", "approx", "cf"};

// Word immediately before text[period], lowercased, leading brackets dropped.
std::string word_before(std::string_view text, std::size_t period) {
  std::size_t begin = period;
  while (begin > 0 && !is_space(text[begin - 1])) --begin;
  std::string word(text.substr(begin, period - begin));
  while (!word.empty() && (word.front() == '(' || word.front() == '[')) word.erase(0, 1);
  std::transform(word.begin(), word.end(), word.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return word;
}

bool is_abbreviation(std::string_view text, std::size_t period) {
  const std::string word = word_before(text, period);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

bool is_split_measurement(std::string_view text, std::size_t period) {
  if (period == 0 || !is_digit(text[period - 1])) return false;
  std::size_t next = period + 1;
  while (next < text.size() && is_space(text[next])) ++next;
  return next < text.size() && is_digit(text[next]);
}

std::string json_string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw Error(ErrorCode::FormatError, std::string("field '") + key + "' must be a string", key);
}

}  // namespace

std::string_view to_string(Level level) noexcept {
  return level == Level::Report ? "report" : "sentence";
}

Level parse_level(std::string_view text) {
  if (text == "report") return Level::Report;
  if (text == "sentence") return Level::Sentence;
  throw Error(ErrorCode::InvalidArgument, "unknown corpus level '" + std::string(text) + "'",
              std::string(text));
}

Corpus::Corpus(Level level, std::vector<CorpusRecord> records)
    : level_(level), records_(std::move(records)) {
  by_id_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.level != level_) {
      throw Error(ErrorCode::WrongLevel, "record " + std::to_string(r.record_id) +
                                             " does not match corpus level",
                  std::to_string(r.record_id));
    }
    if (trim(r.text).empty()) {
      throw Error(ErrorCode::InvalidArgument, "record " + std::to_string(r.record_id) +
                                                  " has blank text",
                  std::to_string(r.record_id));
    }
    if (r.parent_report_id.has_value() != (r.level == Level::Sentence)) {
      throw Error(ErrorCode::InvalidArgument,
                  "parent_report_id must be set exactly for sentence records",
                  std::to_string(r.record_id));
    }
    if (!by_id_.emplace(r.record_id, i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate record_id " + std::to_string(r.record_id),
                  std::to_string(r.record_id));
    }
  }
}

const CorpusRecord* Corpus::find(RecordId id) const noexcept {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

Corpus ingest_reports(std::istream& in, IngestStats* stats) {
  IngestStats local;
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++local.lines_read;

    std::string study_id;
    std::string text;
    if (trim(line).front() == '{') {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::FormatError,
                    "line " + std::to_string(line_no) + ": " + e.what(), std::to_string(line_no));
      }
      study_id = json_string_field(obj, "study_id");
      text = obj.contains("text") ? json_string_field(obj, "text")
                                  : json_string_field(obj, "impression");
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw Error(ErrorCode::FormatError,
                    "line " + std::to_string(line_no) + ": expected study_id<TAB>text",
                    std::to_string(line_no));
      }
      study_id = line.substr(0, tab);
      text = line.substr(tab + 1);
    }

    if (trim(text).empty()) {
      ++local.blank_skipped;
      continue;
    }
    CorpusRecord rec;
    rec.record_id = records.size();
    rec.study_id = std::move(study_id);
    rec.level = Level::Report;
    rec.text = std::move(text);
    records.push_back(std::move(rec));
  }
  if (stats) *stats = local;
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, "no reports with text in input");
  return Corpus(Level::Report, std::move(records));
}

Corpus ingest_reports(const std::filesystem::path& path, IngestStats* stats) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  return ingest_reports(in, stats);
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_terminal(text[i])) continue;
    std::size_t end = i;
    while (end + 1 < n && is_terminal(text[end + 1])) ++end;
    const bool at_boundary = end + 1 == n || is_space(text[end + 1]);
    if (at_boundary && end == i && text[i] == '.' &&
        (is_abbreviation(text, i) || is_split_measurement(text, i))) {
      continue;
    }
    if (at_boundary) {
      auto piece = trim(text.substr(start, end + 1 - start));
      if (!piece.empty()) out.emplace_back(piece);
      start = end + 1;
    }
    i = end;
  }
  if (start < n) {
    auto tail = trim(text.substr(start));
    if (!tail.empty()) out.emplace_back(tail);
  }
  return out;
}

Corpus sentence_split(const Corpus& reports) {
  if (reports.level() != Level::Report) {
    throw Error(ErrorCode::WrongLevel, "sentence_split requires a report-level corpus");
  }
  std::vector<CorpusRecord> out;
  for (const auto& report : reports.records()) {
    for (auto& sentence : split_sentences(report.text)) {
      CorpusRecord rec;
      rec.record_id = out.size();
      rec.study_id = report.study_id;
      rec.level = Level::Sentence;
      rec.text = std::move(sentence);
      rec.parent_report_id = report.record_id;
      out.push_back(std::move(rec));
    }
  }
  return Corpus(Level::Sentence, std::move(out));
}

Corpus dedupe(const Corpus& corpus) {
  std::unordered_set<std::string> seen;
  std::vector<CorpusRecord> kept;
  kept.reserve(corpus.count());
  for (const auto& rec : corpus.records()) {
    std::string key = normalize_whitespace(rec.text);
    if (!seen.insert(key).second) continue;
    CorpusRecord copy = rec;
    copy.text = std::move(key);
    kept.push_back(std::move(copy));
  }
  return Corpus(corpus.level(), std::move(kept));
}

void save_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& r : corpus.records()) {
    json obj = {
        {"record_id", r.record_id},
        {"study_id", r.study_id},
        {"level", to_string(r.level)},
        {"text", r.text},
        {"parent_report_id", r.parent_report_id ? json(*r.parent_report_id) : json(nullptr)},
    };
    out << obj.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string(), path.string());
  save_corpus(corpus, out);
}

Corpus load_corpus(std::istream& in) {
  std::vector<CorpusRecord> records;
  std::optional<Level> level;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json obj = json::parse(line);
      CorpusRecord r;
      r.record_id = obj.at("record_id").get<RecordId>();
      r.study_id = json_string_field(obj, "study_id");
      r.level = parse_level(obj.at("level").get<std::string>());
      r.text = obj.at("text").get<std::string>();
      const auto& parent = obj.at("parent_report_id");
      if (!parent.is_null()) r.parent_report_id = parent.get<RecordId>();
      if (!level) level = r.level;
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::FormatError, "corpus line " + std::to_string(line_no) + ": " + e.what(),
                  std::to_string(line_no));
    }
  }
  if (!level) throw Error(ErrorCode::EmptyCorpus, "corpus file has no records");
  return Corpus(*level, std::move(records));
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  return load_corpus(in);
}

}  // namespace radrag
