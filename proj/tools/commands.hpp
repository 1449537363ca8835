#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "radrag/corpus.hpp"
#include "radrag/eval.hpp"
#include "radrag/generation.hpp"

namespace radrag::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

struct IngestOptions {
  fs::path reports;
  Level level = Level::Sentence;
  fs::path out;
  fs::path summary;  // optional
  bool dedupe = true;
};

struct IngestSummary {
  std::size_t lines_read = 0;
  std::size_t blank_skipped = 0;
  std::size_t reports = 0;
  std::size_t report_duplicates_removed = 0;
  std::size_t sentences = 0;
  std::size_t sentence_duplicates_removed = 0;
  std::size_t records_written = 0;
};

IngestSummary cmd_ingest(const IngestOptions& options, std::ostream& log);

struct BuildIndexOptions {
  fs::path corpus;
  fs::path embeddings;
  fs::path out;
  bool normalize = true;
};

void cmd_build_index(const BuildIndexOptions& options, std::ostream& log);

struct RetrieveOptions {
  fs::path corpus;
  fs::path index;
  fs::path queries;
  fs::path out;
  std::size_t k = 3;
  bool normalize = true;
};

void cmd_retrieve(const RetrieveOptions& options, std::ostream& log);

/// Everything a generate run needs; mirrors the command-line flags and the
/// keys of a JSON config file.
struct RunConfig {
  fs::path corpus;
  fs::path index;
  fs::path queries;
  fs::path templates;  // empty: built-in template directory
  fs::path out_dir;
  GenerationConfig generation;
  std::string client = "stub:echo";
  std::string base_url = "https://api.openai.com";
  std::string api_key_env = "OPENAI_API_KEY";
  int retry_attempts = 3;
  int retry_initial_ms = 1000;
  std::size_t max_in_flight = 4;
  std::uint64_t seed = 0;
  bool normalize = true;

  /// Throws IoError naming the first input path that does not exist.
  void validate_paths() const;
};

struct GenerateResult {
  std::size_t succeeded = 0;
  std::vector<RecordId> failed;
};

/// Writes <out_dir>/impressions.jsonl (one line per successful query, in
/// query order) and <out_dir>/manifest.json. Only the manifest carries a
/// timestamp.
GenerateResult cmd_generate(const RunConfig& config, std::ostream& log);

struct EvaluateOptions {
  fs::path predictions;  // impressions.jsonl from generate
  fs::path references;   // JSON lines of {query_id, text}
  fs::path out_dir;
  double threshold = kDefaultHallucinationThreshold;
  bool hallucination = true;
  std::size_t threads = 1;
  // Sidecars; when absent the deterministic hashing embedders are used.
  fs::path pred_token_embeddings, ref_token_embeddings;
  fs::path pred_report_embeddings, ref_report_embeddings, context_report_embeddings;
  fs::path pred_entities, ref_entities;
  fs::path entity_vocab;  // vocab JSON; pathology terms become the entity list
};

RunEvaluation cmd_evaluate(const EvaluateOptions& options, std::ostream& log);

struct HallucinateOptions {
  fs::path predictions;
  fs::path out_dir;
  double threshold = kDefaultHallucinationThreshold;
  fs::path pred_report_embeddings, context_report_embeddings;
};

HallucinationReport cmd_hallucinate(const HallucinateOptions& options, std::ostream& log);

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns 0 on success, 1 on partial failure, 2 on configuration or input
/// errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace radrag::cli
