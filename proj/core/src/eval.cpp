#include "radrag/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "radrag/error.hpp"

namespace radrag {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::string join_spaces(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

template <typename T>
const T& lookup(const std::unordered_map<std::string, T>& table, std::string_view text,
                const char* what) {
  auto it = table.find(std::string(text));
  if (it == table.end()) {
    throw Error(ErrorCode::InvalidConfig,
                std::string("no sidecar ") + what + " for text '" + std::string(text.substr(0, 60)) + "'");
  }
  return it->second;
}

std::string registered_text(const std::map<RecordId, std::string>& texts, RecordId id) {
  auto it = texts.find(id);
  if (it == texts.end()) {
    throw Error(ErrorCode::AlignmentError, "sidecar id " + std::to_string(id) + " has no text",
                std::to_string(id));
  }
  return it->second;
}

std::string id_list(const std::vector<RecordId>& ids) {
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out += ',';
    out += std::to_string(id);
  }
  return out;
}

void add_scores(EvalScores& acc, const EvalScores& s) {
  acc.bertscore_precision += s.bertscore_precision;
  acc.bertscore_recall += s.bertscore_recall;
  acc.bertscore_f1 += s.bertscore_f1;
  acc.s_emb += s.s_emb;
  acc.entity_f1 += s.entity_f1;
}

json scores_json(const EvalScores& s) {
  return {{"bertscore_precision", s.bertscore_precision},
          {"bertscore_recall", s.bertscore_recall},
          {"bertscore_f1", s.bertscore_f1},
          {"s_emb", s.s_emb},
          {"entity_f1", s.entity_f1}};
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t HashedBagOfWordsEmbedder::bucket(std::string_view token) const noexcept {
  return static_cast<std::size_t>(fnv1a(token) % dim_);
}

EmbeddingVector HashedBagOfWordsEmbedder::embed_report(std::string_view text) const {
  std::vector<float> counts(dim_, 0.0f);
  for (const auto& t : word_tokens(text)) counts[bucket(t)] += 1.0f;
  return EmbeddingVector(std::move(counts));
}

EmbeddingVector HashTokenEmbedder::embed_word(std::string_view token) const {
  std::uint64_t state = fnv1a(token);
  std::vector<float> v(dim_);
  for (auto& x : v) {
    const double unit = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    x = static_cast<float>(2.0 * unit - 1.0);
  }
  return EmbeddingVector(std::move(v));
}

std::vector<EmbeddingVector> HashTokenEmbedder::embed_tokens(std::string_view text) const {
  std::vector<EmbeddingVector> out;
  for (const auto& t : word_tokens(text)) out.push_back(embed_word(t));
  return out;
}

std::set<std::string> TokenSetExtractor::extract(std::string_view text) const {
  auto tokens = word_tokens(text);
  return {tokens.begin(), tokens.end()};
}

VocabEntityExtractor::VocabEntityExtractor(std::vector<std::string> terms) {
  for (const auto& t : terms) {
    auto words = word_tokens(t);
    if (!words.empty()) terms_.push_back(std::move(words));
  }
}

std::set<std::string> VocabEntityExtractor::extract(std::string_view text) const {
  const auto words = word_tokens(text);
  std::set<std::string> found;
  for (const auto& term : terms_) {
    if (term.size() > words.size()) continue;
    for (std::size_t i = 0; i + term.size() <= words.size(); ++i) {
      if (std::equal(term.begin(), term.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        std::string joined;
        for (const auto& w : term) joined += (joined.empty() ? "" : " ") + w;
        found.insert(std::move(joined));
        break;
      }
    }
  }
  return found;
}

void SidecarTokenEmbedder::add(const EmbeddingSet& rows,
                               const std::map<RecordId, std::string>& texts) {
  std::map<RecordId, std::vector<EmbeddingVector>> grouped;
  for (std::size_t i = 0; i < rows.count(); ++i) {
    auto r = rows.row(i);
    grouped[rows.record_ids[i]].emplace_back(std::vector<float>(r.begin(), r.end()));
  }
  for (auto& [id, vectors] : grouped) by_text_[registered_text(texts, id)] = std::move(vectors);
}

std::vector<EmbeddingVector> SidecarTokenEmbedder::embed_tokens(std::string_view text) const {
  return lookup(by_text_, text, "token embeddings");
}

void SidecarReportEmbedder::add(const EmbeddingSet& rows,
                                const std::map<RecordId, std::string>& texts) {
  for (std::size_t i = 0; i < rows.count(); ++i) {
    auto r = rows.row(i);
    by_text_.insert_or_assign(registered_text(texts, rows.record_ids[i]),
                              EmbeddingVector(std::vector<float>(r.begin(), r.end())));
  }
}

EmbeddingVector SidecarReportEmbedder::embed_report(std::string_view text) const {
  return lookup(by_text_, text, "report embedding");
}

void SidecarEntityExtractor::add(std::map<RecordId, std::set<std::string>> entities,
                                 const std::map<RecordId, std::string>& texts) {
  for (auto& [id, set] : entities) by_text_[registered_text(texts, id)] = std::move(set);
}

void SidecarEntityExtractor::add(const std::filesystem::path& path,
                                 const std::map<RecordId, std::string>& texts) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  std::map<RecordId, std::set<std::string>> entities;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const auto obj = json::parse(line);
      auto list = obj.at("entities").get<std::vector<std::string>>();
      entities[obj.at("record_id").get<RecordId>()] = {list.begin(), list.end()};
    } catch (const json::exception& e) {
      throw Error(ErrorCode::FormatError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what(), path.string());
    }
  }
  add(std::move(entities), texts);
}

std::set<std::string> SidecarEntityExtractor::extract(std::string_view text) const {
  return lookup(by_text_, text, "entities");
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimMismatch,
                "cosine of dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  const double na = l2_norm(a.values());
  const double nb = l2_norm(b.values());
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::DegenerateVector, "cosine of a zero vector");
  return std::clamp(dot(a.values(), b.values()) / (na * nb), -1.0, 1.0);
}

BertScore bertscore(std::span<const EmbeddingVector> pred, std::span<const EmbeddingVector> ref) {
  if (pred.empty() || ref.empty()) throw Error(ErrorCode::EmptyText, "bertscore needs tokens on both sides");
  std::vector<double> best_for_ref(ref.size(), -std::numeric_limits<double>::infinity());
  double precision_sum = 0.0;
  for (const auto& p : pred) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < ref.size(); ++j) {
      const double c = cosine(p, ref[j]);
      best = std::max(best, c);
      best_for_ref[j] = std::max(best_for_ref[j], c);
    }
    precision_sum += best;
  }
  double recall_sum = 0.0;
  for (double b : best_for_ref) recall_sum += b;

  BertScore s;
  s.precision = precision_sum / static_cast<double>(pred.size());
  s.recall = recall_sum / static_cast<double>(ref.size());
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

BertScore bertscore(std::string_view pred_text, std::string_view ref_text,
                    const TokenEmbedder& embedder) {
  const auto pred = embedder.embed_tokens(pred_text);
  const auto ref = embedder.embed_tokens(ref_text);
  return bertscore(pred, ref);
}

double s_emb(std::string_view pred_text, std::string_view ref_text, const ReportEmbedder& embedder) {
  return cosine(embedder.embed_report(pred_text), embedder.embed_report(ref_text));
}

double entity_f1(const std::set<std::string>& pred, const std::set<std::string>& ref) {
  if (pred.empty() && ref.empty()) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& e : pred) common += ref.count(e);
  const double p = static_cast<double>(common) / static_cast<double>(pred.size());
  const double r = static_cast<double>(common) / static_cast<double>(ref.size());
  return harmonic(p, r);
}

HallucinationReport summarize_hallucination(std::vector<double> scores, double threshold) {
  if (scores.empty()) throw Error(ErrorCode::EmptyEvaluation, "no records to score");
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in [-1, 1]");
  }
  HallucinationReport r;
  r.threshold = threshold;
  double sum = 0.0;
  std::size_t above = 0;
  r.min = scores.front();
  r.max = scores.front();
  for (double s : scores) {
    sum += s;
    above += s > threshold;
    r.min = std::min(r.min, s);
    r.max = std::max(r.max, s);
  }
  const auto n = static_cast<double>(scores.size());
  r.mean = std::clamp(sum / n, r.min, r.max);
  r.fraction_above = static_cast<double>(above) / n;
  r.scores = std::move(scores);
  return r;
}

HallucinationReport hallucination_report(std::span<const GenerationWithContext> records,
                                         const ReportEmbedder& embedder, double threshold) {
  if (records.empty()) throw Error(ErrorCode::EmptyEvaluation, "no records to score");
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const auto& r : records) scores.push_back(s_emb(r.generation, join_spaces(r.context), embedder));
  return summarize_hallucination(std::move(scores), threshold);
}

RunEvaluation evaluate_run(const std::map<RecordId, std::string>& predictions,
                           const std::map<RecordId, std::string>& references,
                           const std::map<RecordId, std::vector<std::string>>* contexts,
                           const Evaluators& ev, double threshold, std::size_t threads) {
  std::vector<RecordId> only_pred;
  std::vector<RecordId> only_ref;
  for (const auto& [id, _] : predictions) {
    if (!references.count(id)) only_pred.push_back(id);
  }
  for (const auto& [id, _] : references) {
    if (!predictions.count(id)) only_ref.push_back(id);
  }
  if (!only_pred.empty() || !only_ref.empty()) {
    throw Error(ErrorCode::AlignmentError,
                "predictions without references: [" + id_list(only_pred) +
                    "]; references without predictions: [" + id_list(only_ref) + "]",
                id_list(only_pred.empty() ? only_ref : only_pred));
  }
  if (predictions.empty()) throw Error(ErrorCode::EmptyEvaluation, "no records to evaluate");
  if (contexts) {
    std::vector<RecordId> missing;
    for (const auto& [id, _] : predictions) {
      if (!contexts->count(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
      throw Error(ErrorCode::AlignmentError, "records without context: [" + id_list(missing) + "]",
                  id_list(missing));
    }
  }
  const ReportEmbedder& context_embedder = ev.context_reports ? *ev.context_reports : ev.reports;

  RunEvaluation run;
  run.records.resize(predictions.size());
  std::vector<std::pair<RecordId, const std::string*>> work;
  for (const auto& [id, text] : predictions) work.emplace_back(id, &text);

  auto score_one = [&](std::size_t i) {
    const auto id = work[i].first;
    const auto& pred = *work[i].second;
    const auto& ref = references.at(id);
    auto& rec = run.records[i];
    rec.id = id;
    const auto bs = bertscore(pred, ref, ev.tokens);
    rec.scores.bertscore_precision = bs.precision;
    rec.scores.bertscore_recall = bs.recall;
    rec.scores.bertscore_f1 = bs.f1;
    rec.scores.s_emb = s_emb(pred, ref, ev.reports);
    rec.scores.entity_f1 = entity_f1(ev.entities.extract(pred), ev.entities.extract(ref));
    if (contexts) rec.hallucination_s_emb = s_emb(pred, join_spaces(contexts->at(id)), context_embedder);
  };

  const bool parallel = threads > 1 && ev.tokens.supports_concurrency() &&
                        ev.reports.supports_concurrency() && ev.entities.supports_concurrency() &&
                        context_embedder.supports_concurrency();
  if (!parallel) {
    for (std::size_t i = 0; i < work.size(); ++i) score_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < std::min(threads, work.size()); ++t) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < work.size(); i = next++) {
            try {
              score_one(i);
            } catch (...) {
              std::lock_guard lock(failure_mu);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  for (const auto& rec : run.records) add_scores(run.mean, rec.scores);
  const auto n = static_cast<double>(run.records.size());
  run.mean.bertscore_precision /= n;
  run.mean.bertscore_recall /= n;
  run.mean.bertscore_f1 /= n;
  run.mean.s_emb /= n;
  run.mean.entity_f1 /= n;

  if (contexts) {
    std::vector<double> scores;
    for (const auto& rec : run.records) scores.push_back(*rec.hallucination_s_emb);
    run.hallucination = summarize_hallucination(std::move(scores), threshold);
  }
  return run;
}

void write_results_json(const RunEvaluation& run, std::ostream& out) {
  json records = json::array();
  for (const auto& rec : run.records) {
    json row = scores_json(rec.scores);
    row["id"] = rec.id;
    if (rec.hallucination_s_emb) row["hallucination_s_emb"] = *rec.hallucination_s_emb;
    records.push_back(std::move(row));
  }
  json doc;
  doc["metric_variant"] = {{"bertscore", "greedy max-cosine, no idf weighting, no baseline rescaling"},
                           {"s_emb", "cosine of report embeddings"},
                           {"entity_f1", "set overlap; both empty = 1, one empty = 0"}};
  doc["count"] = run.records.size();
  doc["mean"] = scores_json(run.mean);
  doc["records"] = std::move(records);
  if (run.hallucination) {
    const auto& h = *run.hallucination;
    doc["hallucination"] = {{"threshold", h.threshold},
                            {"mean", h.mean},
                            {"min", h.min},
                            {"max", h.max},
                            {"fraction_above", h.fraction_above},
                            {"count", h.scores.size()}};
  }
  out << doc.dump(2) << '\n';
}

void write_results_csv(const RunEvaluation& run, std::ostream& out) {
  const bool with_h = run.hallucination.has_value();
  out << "id,bertscore_precision,bertscore_recall,bertscore_f1,s_emb,entity_f1";
  if (with_h) out << ",hallucination_s_emb";
  out << '\n';
  const auto old_flags = out.flags();
  const auto old_precision = out.precision();
  out << std::setprecision(10);
  auto row = [&](const std::string& id, const EvalScores& s, std::optional<double> h) {
    out << id << ',' << s.bertscore_precision << ',' << s.bertscore_recall << ',' << s.bertscore_f1
        << ',' << s.s_emb << ',' << s.entity_f1;
    if (with_h) {
      out << ',';
      if (h) out << *h;
    }
    out << '\n';
  };
  for (const auto& rec : run.records) row(std::to_string(rec.id), rec.scores, rec.hallucination_s_emb);
  row("mean", run.mean, with_h ? std::optional<double>(run.hallucination->mean) : std::nullopt);
  out.flags(old_flags);
  out.precision(old_precision);
}

}  // namespace radrag
