#include "radrag/llm.hpp"

#include <cstdlib>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "radrag/corpus.hpp"
#include "radrag/error.hpp"

namespace radrag {

namespace {

using nlohmann::json;

constexpr std::string_view kExistingMarker = "EXISTING IMPRESSION:\n";
constexpr std::string_view kNewContextMarker = "NEW CONTEXT:\n";
constexpr std::string_view kContextMarker = "CONTEXT:";

std::string_view section_until_blank_line(std::string_view text, std::size_t start) {
  auto end = text.find("\n\n", start);
  const auto cue = text.find("\nIMPRESSION:", start);
  if (cue != std::string_view::npos && (end == std::string_view::npos || cue < end)) end = cue;
  if (end == std::string_view::npos) end = text.size();
  return text.substr(start, end - start);
}

struct PromptSections {
  std::string_view existing;  // empty unless a refine prompt
  std::string_view context;
};

PromptSections parse_sections(std::string_view prompt) {
  PromptSections s;
  if (auto e = prompt.find(kExistingMarker); e != std::string_view::npos) {
    s.existing = section_until_blank_line(prompt, e + kExistingMarker.size());
    if (auto n = prompt.find(kNewContextMarker, e); n != std::string_view::npos) {
      s.context = section_until_blank_line(prompt, n + kNewContextMarker.size());
    }
    return s;
  }
  auto c = prompt.rfind(kContextMarker);
  if (c == std::string_view::npos) return s;
  std::size_t start = c + kContextMarker.size();
  if (start < prompt.size() && (prompt[start] == '\n' || prompt[start] == ' ')) ++start;
  s.context = section_until_blank_line(prompt, start);
  return s;
}

std::string extractive_dedup(std::string_view existing, std::string_view context) {
  std::string joined(existing);
  if (!joined.empty()) joined += '\n';
  joined += context;
  std::unordered_set<std::string> seen;
  std::string out;
  std::size_t start = 0;
  while (start <= joined.size()) {
    auto nl = joined.find('\n', start);
    if (nl == std::string::npos) nl = joined.size();
    for (auto& sentence : split_sentences(std::string_view(joined).substr(start, nl - start))) {
      auto key = normalize_whitespace(sentence);
      if (!seen.insert(key).second) continue;
      if (!out.empty()) out += ' ';
      out += key;
    }
    start = nl + 1;
  }
  return out;
}

}  // namespace

LlmRequest LlmRequest::from_prompt(const RenderedPrompt& prompt, std::string model,
                                   double temperature, int max_output_tokens) {
  LlmRequest r;
  r.mode = prompt.mode;
  if (prompt.mode == PromptMode::Completion) {
    r.prompt = prompt.text;
  } else {
    r.system = prompt.system;
    r.user = prompt.user;
  }
  r.model = std::move(model);
  r.temperature = temperature;
  r.max_output_tokens = max_output_tokens;
  return r;
}

LlmResponse call_llm(LlmClient& client, const LlmRequest& request) {
  auto response = client.complete(request);
  if (response.text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw LlmUnavailableError(client.name() + " returned an empty completion");
  }
  return response;
}

json to_wire(const LlmRequest& request) {
  json body;
  body["model"] = request.model;
  if (request.mode == PromptMode::Chat) {
    body["messages"] = json::array({
        {{"role", "system"}, {"content", request.system}},
        {{"role", "user"}, {"content", request.user}},
    });
  } else {
    body["prompt"] = request.prompt;
  }
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  return body;
}

LlmResponse from_wire(PromptMode mode, std::string_view body) {
  try {
    const auto obj = json::parse(body);
    const auto& choice = obj.at("choices").at(0);
    LlmResponse r;
    const auto& text = mode == PromptMode::Chat ? choice.at("message").at("content") : choice.at("text");
    if (!text.is_null()) r.text = text.get<std::string>();
    if (auto fr = choice.find("finish_reason"); fr != choice.end() && fr->is_string()) {
      r.finish_reason = fr->get<std::string>();
    }
    if (auto usage = obj.find("usage"); usage != obj.end() && usage->is_object()) {
      r.prompt_tokens = usage->value("prompt_tokens", 0);
      r.completion_tokens = usage->value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed LLM response: ") + e.what());
  }
}

OpenAiClient::OpenAiClient(OpenAiClientOptions options) : options_(std::move(options)) {
  if (options_.retry.max_attempts < 1) {
    throw Error(ErrorCode::InvalidConfig, "retry max_attempts must be at least 1");
  }
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) api_key_ = key;
}

LlmResponse OpenAiClient::complete(const LlmRequest& request) {
  httplib::Client http(options_.base_url);
  if (!http.is_valid()) {
    throw Error(ErrorCode::InvalidConfig, "unusable base URL " + options_.base_url, options_.base_url);
  }
  http.set_connection_timeout(options_.timeout);
  http.set_read_timeout(options_.timeout);
  http.set_write_timeout(options_.timeout);

  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const std::string body = to_wire(request).dump();
  const std::string& path =
      request.mode == PromptMode::Chat ? options_.chat_path : options_.completion_path;

  auto backoff = options_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt < options_.retry.max_attempts; ++attempt) {
    if (attempt > 0) {
      if (options_.sleep) options_.sleep(backoff);
      else std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * options_.retry.multiplier));
    }
    auto res = http.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      try {
        return from_wire(request.mode, res->body);
      } catch (const Error& e) {
        throw LlmUnavailableError(e.what());
      }
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    throw RequestRejectedError(res->status, res->body);
  }
  throw LlmUnavailableError(options_.base_url + path + " failed after " +
                            std::to_string(options_.retry.max_attempts) +
                            " attempts: " + last_error);
}

std::string_view to_string(StubKind kind) noexcept {
  switch (kind) {
    case StubKind::Echo: return "echo";
    case StubKind::Concatenate: return "concat";
    case StubKind::ExtractiveDedup: return "extractive";
  }
  return "echo";
}

StubKind parse_stub_kind(std::string_view text) {
  if (text == "echo") return StubKind::Echo;
  if (text == "concat") return StubKind::Concatenate;
  if (text == "extractive") return StubKind::ExtractiveDedup;
  throw Error(ErrorCode::InvalidArgument, "unknown stub '" + std::string(text) + "'", std::string(text));
}

LlmResponse StubClient::complete(const LlmRequest& request) {
  const std::string_view prompt = request.mode == PromptMode::Chat ? request.user : request.prompt;
  const auto sections = parse_sections(prompt);
  LlmResponse r;
  switch (kind_) {
    case StubKind::Echo:
      r.text = std::string(sections.context);
      break;
    case StubKind::Concatenate:
      r.text = sections.existing.empty()
                   ? std::string(sections.context)
                   : std::string(sections.existing) + " " + std::string(sections.context);
      break;
    case StubKind::ExtractiveDedup:
      r.text = extractive_dedup(sections.existing, sections.context);
      break;
  }
  r.finish_reason = "stop";
  r.prompt_tokens = static_cast<int>(prompt.size() / 4);
  r.completion_tokens = static_cast<int>(r.text.size() / 4);
  return r;
}

std::unique_ptr<LlmClient> make_client(std::string_view spec, const OpenAiClientOptions& options) {
  if (spec == "openai") return std::make_unique<OpenAiClient>(options);
  if (spec.starts_with("stub:")) return std::make_unique<StubClient>(parse_stub_kind(spec.substr(5)));
  throw Error(ErrorCode::InvalidConfig, "unknown client '" + std::string(spec) + "'", std::string(spec));
}

}  // namespace radrag
