#include "commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "radrag/error.hpp"
#include "radrag/index.hpp"
#include "radrag/llm.hpp"
#include "radrag/prompting.hpp"

namespace radrag::cli {

namespace {

using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::InvalidConfig, std::string("missing ") + what, what);
  if (!fs::exists(path)) {
    throw Error(ErrorCode::IoError, std::string(what) + " not found: " + path.string(), path.string());
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string(), path.string());
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                  path.string());
    }
  }
}

RecordId id_field(const json& obj) {
  if (obj.contains("query_id")) return obj.at("query_id").get<RecordId>();
  if (obj.contains("id")) return obj.at("id").get<RecordId>();
  return obj.at("record_id").get<RecordId>();
}

struct Predictions {
  std::map<RecordId, std::string> text;
  std::map<RecordId, std::vector<std::string>> context;
};

Predictions load_predictions(const fs::path& path) {
  Predictions p;
  for_each_json_line(path, [&](const json& obj) {
    const auto id = id_field(obj);
    if (!p.text.emplace(id, obj.at("impression").get<std::string>()).second) {
      throw Error(ErrorCode::AlignmentError, "duplicate prediction id " + std::to_string(id),
                  std::to_string(id));
    }
    if (auto c = obj.find("context"); c != obj.end()) {
      p.context[id] = c->get<std::vector<std::string>>();
    }
  });
  return p;
}

std::map<RecordId, std::string> load_references(const fs::path& path) {
  std::map<RecordId, std::string> refs;
  for_each_json_line(path, [&](const json& obj) {
    const auto id = id_field(obj);
    if (!refs.emplace(id, obj.at("text").get<std::string>()).second) {
      throw Error(ErrorCode::AlignmentError, "duplicate reference id " + std::to_string(id),
                  std::to_string(id));
    }
  });
  return refs;
}

std::map<RecordId, std::string> joined_contexts(const Predictions& p) {
  std::map<RecordId, std::string> out;
  for (const auto& [id, parts] : p.context) {
    std::string joined;
    for (const auto& part : parts) joined += (joined.empty() ? "" : " ") + part;
    out[id] = std::move(joined);
  }
  return out;
}

bool sidecar_pair(const fs::path& pred, const fs::path& ref, const char* what) {
  if (pred.empty() != ref.empty()) {
    throw Error(ErrorCode::InvalidConfig,
                std::string(what) + " sidecars must be given for both predictions and references",
                what);
  }
  if (pred.empty()) return false;
  require_file(pred, what);
  require_file(ref, what);
  return true;
}

json hallucination_json(const HallucinationReport& h, const std::vector<RecordId>& ids) {
  json rows = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) rows.push_back({{"id", ids[i]}, {"s_emb", h.scores[i]}});
  return {{"threshold", h.threshold}, {"mean", h.mean},   {"min", h.min},
          {"max", h.max},             {"fraction_above", h.fraction_above},
          {"count", h.scores.size()}, {"records", rows}};
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::LlmUnavailable:
    case ErrorCode::RequestRejected:
    case ErrorCode::ContextOverflow:
      return kExitPartial;
    default:
      return kExitConfig;
  }
}

// Lets a JSON config file fill any option the command line left unset.
class ConfigBinder {
 public:
  template <typename T>
  CLI::Option* bind(CLI::App& app, const std::string& flag, T& target, const std::string& key,
                    const std::string& help) {
    auto* opt = app.add_option(flag, target, help);
    if constexpr (std::is_same_v<T, std::string> || std::is_arithmetic_v<T> ||
                  std::is_same_v<T, std::vector<std::string>>) {
      bindings_.push_back({opt, key, [&target](const json& j) { target = j.get<T>(); }});
    } else {
      bindings_.push_back({opt, key, [&target](const json& j) { target = T(j.get<std::string>()); }});
    }
    return opt;
  }

  CLI::Option* bind_flag(CLI::App& app, const std::string& flag, bool& target,
                         const std::string& key, const std::string& help) {
    auto* opt = app.add_flag(flag, target, help);
    bindings_.push_back({opt, key, [&target](const json& j) { target = j.get<bool>(); }});
    return opt;
  }

  void apply(const fs::path& config_path) const {
    if (config_path.empty()) return;
    require_file(config_path, "config file");
    std::ifstream in(config_path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::InvalidConfig, config_path.string() + ": " + e.what(), config_path.string());
    }
    if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config file must hold a JSON object");
    for (const auto& [key, _] : doc.items()) {
      const bool known = std::any_of(bindings_.begin(), bindings_.end(),
                                     [&](const Binding& b) { return b.key == key; });
      if (!known) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'", key);
    }
    for (const auto& b : bindings_) {
      if (b.option->count() > 0 || !doc.contains(b.key)) continue;
      try {
        b.apply(doc.at(b.key));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "config key '" + b.key + "': " + e.what(), b.key);
      }
    }
  }

 private:
  struct Binding {
    CLI::Option* option;
    std::string key;
    std::function<void(const json&)> apply;
  };
  std::vector<Binding> bindings_;
};

}  // namespace

IngestSummary cmd_ingest(const IngestOptions& options, std::ostream& log) {
  require_file(options.reports, "reports file");
  if (options.out.empty()) throw Error(ErrorCode::InvalidConfig, "missing output path", "out");

  IngestStats stats;
  Corpus reports = ingest_reports(options.reports, &stats);
  IngestSummary summary;
  summary.lines_read = stats.lines_read;
  summary.blank_skipped = stats.blank_skipped;
  if (options.dedupe) {
    Corpus unique = dedupe(reports);
    summary.report_duplicates_removed = reports.count() - unique.count();
    reports = std::move(unique);
  }
  summary.reports = reports.count();

  Corpus result = reports;
  if (options.level == Level::Sentence) {
    Corpus sentences = sentence_split(reports);
    if (options.dedupe) {
      Corpus unique = dedupe(sentences);
      summary.sentence_duplicates_removed = sentences.count() - unique.count();
      sentences = std::move(unique);
    }
    summary.sentences = sentences.count();
    result = std::move(sentences);
  }
  summary.records_written = result.count();

  auto out = open_out(options.out);
  save_corpus(result, out);

  const json doc = {{"level", to_string(options.level)},
                    {"lines_read", summary.lines_read},
                    {"blank_skipped", summary.blank_skipped},
                    {"reports", summary.reports},
                    {"report_duplicates_removed", summary.report_duplicates_removed},
                    {"sentences", summary.sentences},
                    {"sentence_duplicates_removed", summary.sentence_duplicates_removed},
                    {"records_written", summary.records_written}};
  if (!options.summary.empty()) open_out(options.summary) << doc.dump(2) << '\n';
  log << doc.dump(2) << '\n';
  return summary;
}

void cmd_build_index(const BuildIndexOptions& options, std::ostream& log) {
  require_file(options.corpus, "corpus file");
  require_file(options.embeddings, "embedding file");
  if (options.out.empty()) throw Error(ErrorCode::InvalidConfig, "missing output path", "out");
  const auto corpus = load_corpus(options.corpus);
  const auto index = build_index(corpus, read_embeddings(options.embeddings), options.normalize);
  auto out = open_out(options.out);
  write_embeddings(index.to_embedding_set(), out);
  log << json({{"count", index.count()}, {"dim", index.dim()}, {"normalized", index.normalized()}}).dump()
      << '\n';
}

void cmd_retrieve(const RetrieveOptions& options, std::ostream& log) {
  require_file(options.corpus, "corpus file");
  require_file(options.index, "index file");
  require_file(options.queries, "query embedding file");
  if (options.out.empty()) throw Error(ErrorCode::InvalidConfig, "missing output path", "out");
  const auto corpus = load_corpus(options.corpus);
  const auto index = build_index(corpus, read_embeddings(options.index), options.normalize);
  const auto queries = read_embeddings(options.queries);
  auto out = open_out(options.out);
  for (std::size_t i = 0; i < queries.count(); ++i) {
    auto q = queries.vector(i);
    if (index.normalized() && !q.normalized()) q = normalize(q);
    json results = json::array();
    for (const auto& hit : index.top_k(q, options.k)) {
      results.push_back({{"rank", hit.rank},
                         {"record_id", hit.record_id},
                         {"score", hit.score},
                         {"text", corpus.find(hit.record_id)->text}});
    }
    out << json({{"query_id", queries.record_ids[i]}, {"results", results}}).dump() << '\n';
  }
  log << json({{"queries", queries.count()}, {"k", options.k}}).dump() << '\n';
}

void RunConfig::validate_paths() const {
  require_file(corpus, "corpus file");
  require_file(index, "index file");
  require_file(queries, "query embedding file");
  if (!templates.empty()) require_file(templates / "manifest.json", "template manifest");
  if (out_dir.empty()) throw Error(ErrorCode::InvalidConfig, "missing output directory", "out_dir");
}

GenerateResult cmd_generate(const RunConfig& config, std::ostream& log) {
  config.validate_paths();
  const auto templates = config.templates.empty() ? TemplateSet::load_default()
                                                  : TemplateSet::load(config.templates);
  config.generation.validate(templates);

  const auto corpus = load_corpus(config.corpus);
  if (corpus.level() != config.generation.corpus_level) {
    throw Error(ErrorCode::WrongLevel, "corpus level " + std::string(to_string(corpus.level())) +
                                           " does not match configured " +
                                           std::string(to_string(config.generation.corpus_level)));
  }
  const auto index = build_index(corpus, read_embeddings(config.index), config.normalize);
  const auto queries = read_embeddings(config.queries);

  OpenAiClientOptions http;
  http.base_url = config.base_url;
  http.api_key_env = config.api_key_env;
  http.retry.max_attempts = config.retry_attempts;
  http.retry.initial_backoff = std::chrono::milliseconds(config.retry_initial_ms);
  auto client = make_client(config.client, http);

  const auto outcomes = generate_batch(queries, index, corpus, config.generation, *client, templates,
                                       config.max_in_flight);

  fs::create_directories(config.out_dir);
  auto out = open_out(config.out_dir / "impressions.jsonl");
  GenerateResult result;
  json provenance = json::array();
  json failures = json::array();
  for (const auto& o : outcomes) {
    if (!o.impression) {
      result.failed.push_back(o.query_id);
      failures.push_back({{"query_id", o.query_id}, {"error", o.error}});
      continue;
    }
    const auto& imp = *o.impression;
    ++result.succeeded;
    out << json({{"query_id", o.query_id},
                 {"impression", imp.text},
                 {"provenance", imp.provenance},
                 {"scores", imp.scores},
                 {"context", imp.context},
                 {"llm_calls", imp.llm_call_count},
                 {"refined", imp.refined}})
               .dump()
        << '\n';
    provenance.push_back({{"query_id", o.query_id}, {"provenance", imp.provenance}});
  }

  json hashed = {{"generation", to_json(config.generation)},
                 {"client", config.client},
                 {"normalize", config.normalize},
                 {"seed", config.seed}};
  json manifest = {
      {"tool", "radrag"},
      {"tool_version", kToolVersion},
      {"created_at", utc_timestamp()},
      {"config", hashed},
      {"config_hash", fnv1a_hex(hashed.dump())},
      {"template_versions", templates.versions()},
      {"inputs", {{"corpus", config.corpus.string()},
                  {"index", config.index.string()},
                  {"queries", config.queries.string()}}},
      {"queries", queries.count()},
      {"succeeded", result.succeeded},
      {"records", provenance},
      {"failures", failures},
  };
  open_out(config.out_dir / "manifest.json") << manifest.dump(2) << '\n';
  log << json({{"queries", queries.count()},
               {"succeeded", result.succeeded},
               {"failed", result.failed.size()}})
             .dump()
      << '\n';
  return result;
}

RunEvaluation cmd_evaluate(const EvaluateOptions& options, std::ostream& log) {
  require_file(options.predictions, "predictions file");
  require_file(options.references, "references file");
  if (options.out_dir.empty()) throw Error(ErrorCode::InvalidConfig, "missing output directory", "out_dir");

  const auto preds = load_predictions(options.predictions);
  const auto refs = load_references(options.references);
  const auto contexts = joined_contexts(preds);
  if (options.hallucination && contexts.size() != preds.text.size()) {
    throw Error(ErrorCode::InvalidConfig,
                "hallucination scoring needs a context list on every prediction (or --no-hallucination)");
  }

  HashTokenEmbedder hash_tokens;
  SidecarTokenEmbedder sidecar_tokens;
  const TokenEmbedder* tokens = &hash_tokens;
  if (sidecar_pair(options.pred_token_embeddings, options.ref_token_embeddings, "token embedding")) {
    sidecar_tokens.add(read_embeddings(options.pred_token_embeddings), preds.text);
    sidecar_tokens.add(read_embeddings(options.ref_token_embeddings), refs);
    tokens = &sidecar_tokens;
  }

  HashedBagOfWordsEmbedder bow;
  SidecarReportEmbedder sidecar_reports;
  const ReportEmbedder* reports = &bow;
  const ReportEmbedder* context_reports = &bow;
  if (sidecar_pair(options.pred_report_embeddings, options.ref_report_embeddings, "report embedding")) {
    sidecar_reports.add(read_embeddings(options.pred_report_embeddings), preds.text);
    sidecar_reports.add(read_embeddings(options.ref_report_embeddings), refs);
    reports = &sidecar_reports;
    if (options.hallucination) {
      if (options.context_report_embeddings.empty()) {
        throw Error(ErrorCode::InvalidConfig,
                    "report embedding sidecars need --context-report-embeddings for hallucination scoring",
                    "context_report_embeddings");
      }
      require_file(options.context_report_embeddings, "context report embedding");
      sidecar_reports.add(read_embeddings(options.context_report_embeddings), contexts);
      context_reports = &sidecar_reports;
    }
  }

  TokenSetExtractor token_entities;
  std::unique_ptr<VocabEntityExtractor> vocab_entities;
  SidecarEntityExtractor sidecar_entities;
  const EntityExtractor* entities = &token_entities;
  if (sidecar_pair(options.pred_entities, options.ref_entities, "entity")) {
    sidecar_entities.add(options.pred_entities, preds.text);
    sidecar_entities.add(options.ref_entities, refs);
    entities = &sidecar_entities;
  } else if (!options.entity_vocab.empty()) {
    require_file(options.entity_vocab, "entity vocab");
    vocab_entities = std::make_unique<VocabEntityExtractor>(VocabLists::load(options.entity_vocab).pathology);
    entities = vocab_entities.get();
  }

  Evaluators ev{*tokens, *reports, *entities, context_reports};
  const auto run = evaluate_run(preds.text, refs, options.hallucination ? &preds.context : nullptr, ev,
                                options.threshold, options.threads);

  fs::create_directories(options.out_dir);
  {
    auto out = open_out(options.out_dir / "metrics.json");
    write_results_json(run, out);
  }
  {
    auto out = open_out(options.out_dir / "metrics.csv");
    write_results_csv(run, out);
  }
  json summary = {{"count", run.records.size()},
                  {"bertscore_f1", run.mean.bertscore_f1},
                  {"s_emb", run.mean.s_emb},
                  {"entity_f1", run.mean.entity_f1}};
  if (run.hallucination) {
    summary["hallucination_mean"] = run.hallucination->mean;
    summary["hallucination_fraction_above"] = run.hallucination->fraction_above;
  }
  log << summary.dump() << '\n';
  return run;
}

HallucinationReport cmd_hallucinate(const HallucinateOptions& options, std::ostream& log) {
  require_file(options.predictions, "predictions file");
  if (options.out_dir.empty()) throw Error(ErrorCode::InvalidConfig, "missing output directory", "out_dir");
  const auto preds = load_predictions(options.predictions);
  if (preds.context.size() != preds.text.size()) {
    throw Error(ErrorCode::InvalidConfig, "every prediction needs a context list");
  }
  const auto contexts = joined_contexts(preds);

  HashedBagOfWordsEmbedder bow;
  SidecarReportEmbedder sidecar;
  const ReportEmbedder* embedder = &bow;
  if (sidecar_pair(options.pred_report_embeddings, options.context_report_embeddings, "report embedding")) {
    sidecar.add(read_embeddings(options.pred_report_embeddings), preds.text);
    sidecar.add(read_embeddings(options.context_report_embeddings), contexts);
    embedder = &sidecar;
  }

  std::vector<GenerationWithContext> records;
  std::vector<RecordId> ids;
  for (const auto& [id, text] : preds.text) {
    records.push_back({text, preds.context.at(id)});
    ids.push_back(id);
  }
  const auto report = hallucination_report(records, *embedder, options.threshold);
  fs::create_directories(options.out_dir);
  open_out(options.out_dir / "hallucination.json") << hallucination_json(report, ids).dump(2) << '\n';
  log << json({{"count", report.scores.size()},
               {"mean", report.mean},
               {"fraction_above", report.fraction_above},
               {"threshold", report.threshold}})
             .dump()
      << '\n';
  return report;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented radiology impression generation", "radrag"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // ingest
  IngestOptions ingest;
  std::string ingest_level = "sentence";
  bool no_dedupe = false;
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a report or sentence corpus from raw reports");
  ingest_cmd->add_option("--reports", ingest.reports, "Reports file (JSON lines or study_id<TAB>text)")->required();
  ingest_cmd->add_option("--level", ingest_level, "report or sentence")->check(CLI::IsMember({"report", "sentence"}));
  ingest_cmd->add_option("--out", ingest.out, "Output corpus (JSON lines)")->required();
  ingest_cmd->add_option("--summary", ingest.summary, "Also write the summary JSON here");
  ingest_cmd->add_flag("--no-dedupe", no_dedupe, "Keep duplicate lines");

  // build-index
  BuildIndexOptions build;
  bool build_no_norm = false;
  auto* build_cmd = app.add_subcommand("build-index", "Align embeddings with a corpus and write the index file");
  build_cmd->add_option("--corpus", build.corpus)->required();
  build_cmd->add_option("--embeddings", build.embeddings, "EMB1 binary or JSON lines")->required();
  build_cmd->add_option("--out", build.out)->required();
  build_cmd->add_flag("--no-normalize", build_no_norm, "Keep raw vectors (plain dot product)");

  // retrieve
  RetrieveOptions retrieve;
  bool retrieve_no_norm = false;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Top-K records for each query embedding");
  retrieve_cmd->add_option("--corpus", retrieve.corpus)->required();
  retrieve_cmd->add_option("--index", retrieve.index)->required();
  retrieve_cmd->add_option("--queries", retrieve.queries)->required();
  retrieve_cmd->add_option("--out", retrieve.out)->required();
  retrieve_cmd->add_option("--k", retrieve.k)->check(CLI::PositiveNumber);
  retrieve_cmd->add_flag("--no-normalize", retrieve_no_norm);

  // generate
  RunConfig run;
  fs::path config_path;
  std::string level_str = "sentence", mode_str = "chat", estimator_str = "chars4";
  std::vector<std::string> instructions;
  ConfigBinder binder;
  auto* gen_cmd = app.add_subcommand("generate", "Retrieve context and generate impressions");
  gen_cmd->add_option("--config", config_path, "JSON config; command-line flags take precedence");
  binder.bind(*gen_cmd, "--corpus", run.corpus, "corpus", "Corpus file");
  binder.bind(*gen_cmd, "--index", run.index, "index", "Index embedding file");
  binder.bind(*gen_cmd, "--queries", run.queries, "queries", "Query embedding file");
  binder.bind(*gen_cmd, "--templates", run.templates, "templates", "Template directory");
  binder.bind(*gen_cmd, "--out-dir", run.out_dir, "out_dir", "Output directory");
  binder.bind(*gen_cmd, "--k", run.generation.k, "k", "Records retrieved per query");
  binder.bind(*gen_cmd, "--level", level_str, "corpus_level", "report or sentence");
  binder.bind(*gen_cmd, "--mode", mode_str, "mode", "chat or completion");
  binder.bind(*gen_cmd, "--model", run.generation.model_name, "model_name", "Model name sent to the endpoint");
  binder.bind(*gen_cmd, "--temperature", run.generation.temperature, "temperature", "Sampling temperature");
  binder.bind(*gen_cmd, "--token-budget", run.generation.token_budget, "token_budget", "Prompt token budget");
  binder.bind_flag(*gen_cmd, "--refine,!--no-refine", run.generation.refine_enabled, "refine_enabled",
                   "Use the refine chain when the prompt exceeds the budget");
  binder.bind(*gen_cmd, "--maxlen", run.generation.maxlen, "maxlen", "Word limit stated in the prompt");
  binder.bind(*gen_cmd, "--max-output-tokens", run.generation.max_output_tokens, "max_output_tokens",
              "max_tokens sent to the endpoint");
  binder.bind(*gen_cmd, "--estimator", estimator_str, "estimator", "chars4 or whitespace");
  binder.bind(*gen_cmd, "--instruction", instructions, "instructions", "Replace the default instructions");
  binder.bind(*gen_cmd, "--client", run.client, "client", "stub:echo, stub:concat, stub:extractive or openai");
  binder.bind(*gen_cmd, "--base-url", run.base_url, "base_url", "Endpoint base URL");
  binder.bind(*gen_cmd, "--api-key-env", run.api_key_env, "api_key_env", "Environment variable holding the API key");
  binder.bind(*gen_cmd, "--retry-attempts", run.retry_attempts, "retry_attempts", "Attempts per request");
  binder.bind(*gen_cmd, "--retry-initial-ms", run.retry_initial_ms, "retry_initial_ms", "First backoff delay");
  binder.bind(*gen_cmd, "--max-in-flight", run.max_in_flight, "max_in_flight", "Concurrent LLM requests");
  binder.bind(*gen_cmd, "--seed", run.seed, "seed", "Recorded in the manifest");
  binder.bind_flag(*gen_cmd, "--normalize,!--no-normalize", run.normalize, "normalize",
                   "Unit-normalize index rows and queries");

  // evaluate
  EvaluateOptions eval;
  bool no_hallucination = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against references");
  eval_cmd->add_option("--predictions", eval.predictions, "impressions.jsonl from generate")->required();
  eval_cmd->add_option("--references", eval.references, "JSON lines of {query_id, text}")->required();
  eval_cmd->add_option("--out-dir", eval.out_dir)->required();
  eval_cmd->add_option("--threshold", eval.threshold)->check(CLI::Range(-1.0, 1.0));
  eval_cmd->add_option("--threads", eval.threads);
  eval_cmd->add_flag("--no-hallucination", no_hallucination);
  eval_cmd->add_option("--pred-token-embeddings", eval.pred_token_embeddings);
  eval_cmd->add_option("--ref-token-embeddings", eval.ref_token_embeddings);
  eval_cmd->add_option("--pred-report-embeddings", eval.pred_report_embeddings);
  eval_cmd->add_option("--ref-report-embeddings", eval.ref_report_embeddings);
  eval_cmd->add_option("--context-report-embeddings", eval.context_report_embeddings);
  eval_cmd->add_option("--pred-entities", eval.pred_entities);
  eval_cmd->add_option("--ref-entities", eval.ref_entities);
  eval_cmd->add_option("--entity-vocab", eval.entity_vocab);

  // hallucinate
  HallucinateOptions hall;
  auto* hall_cmd = app.add_subcommand("hallucinate", "Similarity of each generation to its retrieved context");
  hall_cmd->add_option("--predictions", hall.predictions)->required();
  hall_cmd->add_option("--out-dir", hall.out_dir)->required();
  hall_cmd->add_option("--threshold", hall.threshold)->check(CLI::Range(-1.0, 1.0));
  hall_cmd->add_option("--pred-report-embeddings", hall.pred_report_embeddings);
  hall_cmd->add_option("--context-report-embeddings", hall.context_report_embeddings);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (ingest_cmd->parsed()) {
      ingest.level = parse_level(ingest_level);
      ingest.dedupe = !no_dedupe;
      cmd_ingest(ingest, out);
    } else if (build_cmd->parsed()) {
      build.normalize = !build_no_norm;
      cmd_build_index(build, out);
    } else if (retrieve_cmd->parsed()) {
      retrieve.normalize = !retrieve_no_norm;
      cmd_retrieve(retrieve, out);
    } else if (gen_cmd->parsed()) {
      binder.apply(config_path);
      run.generation.corpus_level = parse_level(level_str);
      run.generation.mode = parse_prompt_mode(mode_str);
      run.generation.estimator = parse_token_estimator(estimator_str);
      run.generation.instructions = instructions;
      const auto result = cmd_generate(run, out);
      if (!result.failed.empty()) {
        err << "generation failed for query ids:";
        for (auto id : result.failed) err << ' ' << id;
        err << '\n';
        return kExitPartial;
      }
    } else if (eval_cmd->parsed()) {
      eval.hallucination = !no_hallucination;
      cmd_evaluate(eval, out);
    } else if (hall_cmd->parsed()) {
      cmd_hallucinate(hall, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPartial;
  }
  return kExitOk;
}

}  // namespace radrag::cli
