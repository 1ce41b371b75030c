#include "flock/error.hpp"

namespace flockmtl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateResource: return "DuplicateResource";
    case ErrorCode::InvalidDefinition: return "InvalidDefinition";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::VersionNotFound: return "VersionNotFound";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::BindingError: return "BindingError";
    case ErrorCode::UnknownResource: return "UnknownResource";
    case ErrorCode::MisplacedAggregate: return "MisplacedAggregate";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::ExecError: return "ExecError";
    case ErrorCode::HeterogeneousRows: return "HeterogeneousRows";
    case ErrorCode::InvalidTemplate: return "InvalidTemplate";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::DuplicateDocId: return "DuplicateDocId";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::InvalidOverride: return "InvalidOverride";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
  }
  return "Unknown";
}

std::string_view provider_error_kind_name(ProviderErrorKind kind) {
  switch (kind) {
    case ProviderErrorKind::ContextOverflow: return "ContextOverflow";
    case ProviderErrorKind::RateLimited: return "RateLimited";
    case ProviderErrorKind::Transient: return "Transient";
    case ProviderErrorKind::Fatal: return "Fatal";
  }
  return "Unknown";
}

std::string SyntaxError::format(const std::string& message, int line, int column,
                                const std::string& expected) {
  std::string out = "syntax error at line " + std::to_string(line) + ", column " +
                    std::to_string(column) + ": " + message;
  if (!expected.empty()) out += " (expected " + expected + ")";
  return out;
}

}  // namespace flockmtl
