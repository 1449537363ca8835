#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace radrag {

enum class ErrorCode {
  EmptyCorpus,
  WrongLevel,
  DegenerateVector,
  CorpusEmbeddingMismatch,
  DimMismatch,
  EmptyContext,
  MissingShots,
  MissingVocab,
  ContextOverflow,
  LlmUnavailable,
  RequestRejected,
  NotJson,
  SchemaViolation,
  VocabViolation,
  EmptyText,
  EmptyEvaluation,
  AlignmentError,
  InvalidArgument,
  InvalidConfig,
  FormatError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above.
/// `detail` holds the offending field, term, path or id when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Raised by transport and orchestration when the LLM cannot be reached.
/// A refine chain reports the 0-based step that failed.
class LlmUnavailableError : public Error {
 public:
  explicit LlmUnavailableError(const std::string& message,
                               std::optional<std::size_t> chain_index = std::nullopt);

  std::optional<std::size_t> chain_index() const noexcept { return chain_index_; }

 private:
  std::optional<std::size_t> chain_index_;
};

class RequestRejectedError : public Error {
 public:
  RequestRejectedError(int status, const std::string& body);

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace radrag
