#include "radrag/error.hpp"

namespace radrag {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::WrongLevel: return "WrongLevel";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::CorpusEmbeddingMismatch: return "CorpusEmbeddingMismatch";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyContext: return "EmptyContext";
    case ErrorCode::MissingShots: return "MissingShots";
    case ErrorCode::MissingVocab: return "MissingVocab";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::LlmUnavailable: return "LlmUnavailable";
    case ErrorCode::RequestRejected: return "RequestRejected";
    case ErrorCode::NotJson: return "NotJson";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::VocabViolation: return "VocabViolation";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string compose(ErrorCode code, const std::string& message) {
  std::string out(to_string(code));
  out += ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::string detail)
    : std::runtime_error(compose(code, message)), code_(code), detail_(std::move(detail)) {}

LlmUnavailableError::LlmUnavailableError(const std::string& message,
                                         std::optional<std::size_t> chain_index)
    : Error(ErrorCode::LlmUnavailable,
            chain_index ? message + " (refine step " + std::to_string(*chain_index) + ")" : message,
            chain_index ? std::to_string(*chain_index) : std::string{}),
      chain_index_(chain_index) {}

RequestRejectedError::RequestRejectedError(int status, const std::string& body)
    : Error(ErrorCode::RequestRejected, "HTTP " + std::to_string(status) + " " + body,
            std::to_string(status)),
      status_(status) {}

}  // namespace radrag
