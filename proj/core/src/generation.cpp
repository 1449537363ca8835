#include "radrag/generation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <thread>

#include <nlohmann/json.hpp>

#include "radrag/error.hpp"

namespace radrag {

namespace {

using nlohmann::json;

std::size_t code_points(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) n += (c & 0xC0) != 0x80;
  return n;
}

std::size_t whitespace_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

LlmResponse call_step(LlmClient& client, const LlmRequest& request, std::size_t step) {
  try {
    return call_llm(client, request);
  } catch (const LlmUnavailableError& e) {
    throw LlmUnavailableError(e.what(), step);
  }
}

}  // namespace

std::string_view to_string(TokenEstimator estimator) noexcept {
  return estimator == TokenEstimator::Whitespace ? "whitespace" : "chars4";
}

TokenEstimator parse_token_estimator(std::string_view text) {
  if (text == "chars4") return TokenEstimator::CharsPerFour;
  if (text == "whitespace") return TokenEstimator::Whitespace;
  throw Error(ErrorCode::InvalidArgument, "unknown token estimator '" + std::string(text) + "'",
              std::string(text));
}

std::size_t estimate_tokens(std::string_view text, TokenEstimator estimator) {
  if (estimator == TokenEstimator::Whitespace) return whitespace_tokens(text);
  return (code_points(text) + 3) / 4;
}

PromptSpec GenerationConfig::prompt_spec(const TemplateSet& templates) const {
  auto spec = PromptSpec::with_defaults(templates, mode, maxlen);
  if (!instructions.empty()) spec.instructions = instructions;
  return spec;
}

void GenerationConfig::validate(const TemplateSet& templates) const {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be at least 1", "k");
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be >= 0", "temperature");
  if (maxlen < 1) throw Error(ErrorCode::InvalidConfig, "maxlen must be at least 1", "maxlen");
  if (max_output_tokens < 1) {
    throw Error(ErrorCode::InvalidConfig, "max_output_tokens must be at least 1", "max_output_tokens");
  }
  const auto floor = estimate_tokens(render_zero_shot_skeleton(prompt_spec(templates), templates).combined(),
                                     estimator);
  if (token_budget < floor) {
    throw Error(ErrorCode::InvalidConfig,
                "token_budget " + std::to_string(token_budget) +
                    " is below the empty-context prompt size " + std::to_string(floor),
                "token_budget");
  }
}

json to_json(const GenerationConfig& c) {
  return {
      {"k", c.k},
      {"corpus_level", to_string(c.corpus_level)},
      {"mode", to_string(c.mode)},
      {"model_name", c.model_name},
      {"temperature", c.temperature},
      {"token_budget", c.token_budget},
      {"refine_enabled", c.refine_enabled},
      {"maxlen", c.maxlen},
      {"max_output_tokens", c.max_output_tokens},
      {"estimator", to_string(c.estimator)},
      {"instructions", c.instructions},
  };
}

GenerationConfig generation_config_from_json(const json& obj) {
  GenerationConfig c;
  try {
    c.k = obj.value("k", c.k);
    c.corpus_level = parse_level(obj.value("corpus_level", std::string(to_string(c.corpus_level))));
    c.mode = parse_prompt_mode(obj.value("mode", std::string(to_string(c.mode))));
    c.model_name = obj.value("model_name", c.model_name);
    c.temperature = obj.value("temperature", c.temperature);
    c.token_budget = obj.value("token_budget", c.token_budget);
    c.refine_enabled = obj.value("refine_enabled", c.refine_enabled);
    c.maxlen = obj.value("maxlen", c.maxlen);
    c.max_output_tokens = obj.value("max_output_tokens", c.max_output_tokens);
    c.estimator = parse_token_estimator(obj.value("estimator", std::string(to_string(c.estimator))));
    c.instructions = obj.value("instructions", c.instructions);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("generation config: ") + e.what());
  }
  return c;
}

Impression refine_generate(std::span<const std::string> records, const GenerationConfig& config,
                           LlmClient& client, const TemplateSet& templates) {
  if (records.empty()) throw Error(ErrorCode::EmptyContext, "refine chain needs at least one record");
  const auto spec = config.prompt_spec(templates);

  Impression out;
  out.config = config;
  out.refined = records.size() > 1;
  const auto first = render_zero_shot(records.subspan(0, 1), spec, templates);
  out.text = call_step(client,
                       LlmRequest::from_prompt(first, config.model_name, config.temperature,
                                               config.max_output_tokens),
                       0)
                 .text;
  out.llm_call_count = 1;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto prompt = render_refine(out.text, records[i], spec, templates);
    out.text = call_step(client,
                         LlmRequest::from_prompt(prompt, config.model_name, config.temperature,
                                                 config.max_output_tokens),
                         i)
                   .text;
    ++out.llm_call_count;
  }
  return out;
}

Impression generate(const EmbeddingVector& query, const VectorIndex& index, const Corpus& corpus,
                    const GenerationConfig& config, LlmClient& client,
                    const TemplateSet& templates) {
  config.validate(templates);
  const EmbeddingVector q = index.normalized() && !query.normalized() ? normalize(query) : query;
  const auto hits = index.top_k(q, config.k);

  std::vector<std::string> context;
  std::vector<RecordId> ids;
  std::vector<double> scores;
  for (const auto& hit : hits) {
    const auto* rec = corpus.find(hit.record_id);
    if (!rec) {
      throw Error(ErrorCode::CorpusEmbeddingMismatch,
                  "index record " + std::to_string(hit.record_id) + " is not in the corpus",
                  std::to_string(hit.record_id));
    }
    context.push_back(rec->text);
    ids.push_back(hit.record_id);
    scores.push_back(hit.score);
  }

  const auto spec = config.prompt_spec(templates);
  const auto prompt = render_zero_shot(context, spec, templates);

  Impression out;
  if (estimate_tokens(prompt.combined(), config.estimator) <= config.token_budget) {
    const auto request = LlmRequest::from_prompt(prompt, config.model_name, config.temperature,
                                                 config.max_output_tokens);
    out.text = call_llm(client, request).text;
    out.llm_call_count = 1;
    out.config = config;
  } else if (config.refine_enabled) {
    out = refine_generate(context, config, client, templates);
    out.refined = true;
  } else {
    throw Error(ErrorCode::ContextOverflow,
                "prompt exceeds token budget " + std::to_string(config.token_budget) +
                    " and refine is disabled");
  }
  out.provenance = std::move(ids);
  out.scores = std::move(scores);
  out.context = std::move(context);
  return out;
}

std::vector<QueryOutcome> generate_batch(const EmbeddingSet& queries, const VectorIndex& index,
                                         const Corpus& corpus, const GenerationConfig& config,
                                         LlmClient& client, const TemplateSet& templates,
                                         std::size_t max_in_flight) {
  config.validate(templates);
  std::vector<QueryOutcome> outcomes(queries.count());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < queries.count(); i = next++) {
      auto& slot = outcomes[i];
      slot.query_id = queries.record_ids[i];
      try {
        slot.impression = generate(queries.vector(i), index, corpus, config, client, templates);
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(max_in_flight, queries.count()));
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  return outcomes;
}

}  // namespace radrag
