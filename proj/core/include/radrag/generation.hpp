#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "radrag/corpus.hpp"
#include "radrag/index.hpp"
#include "radrag/llm.hpp"
#include "radrag/prompting.hpp"

namespace radrag {

enum class TokenEstimator { CharsPerFour, Whitespace };

std::string_view to_string(TokenEstimator estimator) noexcept;
TokenEstimator parse_token_estimator(std::string_view text);

/// CharsPerFour: ceil(code points / 4). Whitespace: number of
/// whitespace-separated tokens.
std::size_t estimate_tokens(std::string_view text,
                            TokenEstimator estimator = TokenEstimator::CharsPerFour);

struct GenerationConfig {
  std::size_t k = 3;
  Level corpus_level = Level::Sentence;
  PromptMode mode = PromptMode::Chat;
  std::string model_name = "gpt-4";
  double temperature = 0.0;
  std::size_t token_budget = 4096;
  bool refine_enabled = true;
  int maxlen = 50;
  int max_output_tokens = 256;
  TokenEstimator estimator = TokenEstimator::CharsPerFour;
  /// Instructions (Q); empty means the template set's defaults for `mode`.
  std::vector<std::string> instructions;

  /// Throws InvalidConfig when a field is out of range or the budget cannot
  /// hold the empty-context prompt.
  void validate(const TemplateSet& templates) const;
  PromptSpec prompt_spec(const TemplateSet& templates) const;
};

nlohmann::json to_json(const GenerationConfig& config);
GenerationConfig generation_config_from_json(const nlohmann::json& obj);

struct Impression {
  std::string text;
  std::vector<RecordId> provenance;  // rank order
  std::vector<double> scores;        // retrieval scores aligned with provenance
  std::vector<std::string> context;  // retrieved texts aligned with provenance
  std::size_t llm_call_count = 0;
  bool refined = false;
  GenerationConfig config;
};

/// Retrieves the top-k records for `query`, renders the zero-shot prompt and
/// makes one LLM call when it fits `token_budget`; otherwise runs the refine
/// chain (or throws ContextOverflow when refine is disabled). The query is
/// normalized first when the index is.
Impression generate(const EmbeddingVector& query, const VectorIndex& index, const Corpus& corpus,
                    const GenerationConfig& config, LlmClient& client,
                    const TemplateSet& templates);

/// I_1 from the zero-shot prompt over the first record, then one refine call
/// per further record threading the previous impression. A failed call
/// raises LlmUnavailableError carrying the 0-based step index.
Impression refine_generate(std::span<const std::string> records, const GenerationConfig& config,
                           LlmClient& client, const TemplateSet& templates);

struct QueryOutcome {
  RecordId query_id = 0;
  std::optional<Impression> impression;
  std::string error;  // set when impression is empty
};

/// Runs generate() for every query with at most `max_in_flight` concurrent
/// LLM requests. Outcomes keep query order; per-query failures are captured
/// rather than thrown.
std::vector<QueryOutcome> generate_batch(const EmbeddingSet& queries, const VectorIndex& index,
                                         const Corpus& corpus, const GenerationConfig& config,
                                         LlmClient& client, const TemplateSet& templates,
                                         std::size_t max_in_flight = 4);

}  // namespace radrag
