#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "radrag/prompting.hpp"

namespace radrag {

struct LlmRequest {
  PromptMode mode = PromptMode::Chat;
  std::string prompt;  // completion mode
  std::string system;  // chat mode
  std::string user;    // chat mode
  std::string model;
  double temperature = 0.0;
  int max_output_tokens = 256;

  static LlmRequest from_prompt(const RenderedPrompt& prompt, std::string model,
                                double temperature, int max_output_tokens);

  bool operator==(const LlmRequest&) const = default;
};

struct LlmResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  std::string finish_reason;
};

/// Anything that turns a request into generated text. Implementations used
/// from generate_batch must tolerate concurrent calls.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual LlmResponse complete(const LlmRequest& request) = 0;
  virtual std::string name() const = 0;
};

/// Sends `request` through `client` and rejects empty completions.
LlmResponse call_llm(LlmClient& client, const LlmRequest& request);

/// Request body for the OpenAI-compatible wire: chat requests carry a
/// system and a user message; completion requests carry `prompt`.
nlohmann::json to_wire(const LlmRequest& request);

/// Extracts text, usage and finish reason from a chat or completion response
/// body. Throws FormatError when the body has no choices.
LlmResponse from_wire(PromptMode mode, std::string_view body);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

struct OpenAiClientOptions {
  std::string base_url = "https://api.openai.com";
  std::string chat_path = "/v1/chat/completions";
  std::string completion_path = "/v1/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{60};
  RetryPolicy retry;
  /// Replaces std::this_thread::sleep_for between attempts when set.
  std::function<void(std::chrono::milliseconds)> sleep;
};

/// HTTP client for OpenAI-compatible endpoints. 429, 5xx and transport
/// failures are retried with exponential backoff; any other 4xx is
/// rejected immediately.
class OpenAiClient final : public LlmClient {
 public:
  explicit OpenAiClient(OpenAiClientOptions options = {});

  LlmResponse complete(const LlmRequest& request) override;
  std::string name() const override { return "openai:" + options_.base_url; }

 private:
  OpenAiClientOptions options_;
  std::string api_key_;
};

/// Test clients. Each derives its output only from the prompt text.
enum class StubKind {
  Echo,             // returns the (new) context block verbatim
  Concatenate,      // zero-shot: the context; refine: previous + " " + new
  ExtractiveDedup,  // unique context sentences, in order, joined by spaces
};

std::string_view to_string(StubKind kind) noexcept;
StubKind parse_stub_kind(std::string_view text);

class StubClient final : public LlmClient {
 public:
  explicit StubClient(StubKind kind) : kind_(kind) {}

  LlmResponse complete(const LlmRequest& request) override;
  std::string name() const override { return "stub:" + std::string(to_string(kind_)); }

 private:
  StubKind kind_;
};

/// "stub:echo", "stub:concat", "stub:extractive", or "openai".
std::unique_ptr<LlmClient> make_client(std::string_view spec, const OpenAiClientOptions& options = {});

}  // namespace radrag
