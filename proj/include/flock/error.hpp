#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flockmtl {

enum class ErrorCode {
  DuplicateResource,
  InvalidDefinition,
  NotFound,
  VersionNotFound,
  SyntaxError,
  BindingError,
  UnknownResource,
  MisplacedAggregate,
  GenerationFailed,
  IoError,
  RaggedRow,
  ExecError,
  HeterogeneousRows,
  InvalidTemplate,
  DomainError,
  DuplicateDocId,
  DimensionMismatch,
  ZeroVector,
  UnknownModel,
  ProviderError,
  InvalidOverride,
  TypeMismatch,
};

/// Stable machine-readable name, used in service error payloads.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, int line, int column, std::string expected = {})
      : Error(ErrorCode::SyntaxError, format(message, line, column, expected)),
        line_(line),
        column_(column),
        expected_(std::move(expected)) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  static std::string format(const std::string& message, int line, int column,
                            const std::string& expected);
  int line_;
  int column_;
  std::string expected_;
};

enum class ProviderErrorKind { ContextOverflow, RateLimited, Transient, Fatal };

std::string_view provider_error_kind_name(ProviderErrorKind kind);

class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& message)
      : Error(ErrorCode::ProviderError,
              std::string(provider_error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ProviderErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept {
    return kind_ == ProviderErrorKind::RateLimited || kind_ == ProviderErrorKind::Transient;
  }

 private:
  ProviderErrorKind kind_;
};

/// Execution failure attributed to a plan node.
class ExecError : public Error {
 public:
  ExecError(int node_id, const std::string& cause, bool provider_fatal = false,
            ErrorCode cause_code = ErrorCode::ExecError)
      : Error(ErrorCode::ExecError, "node " + std::to_string(node_id) + ": " + cause),
        node_id_(node_id),
        provider_fatal_(provider_fatal),
        cause_code_(cause_code) {}

  int node_id() const noexcept { return node_id_; }
  bool provider_fatal() const noexcept { return provider_fatal_; }
  ErrorCode cause_code() const noexcept { return cause_code_; }

 private:
  int node_id_;
  bool provider_fatal_;
  ErrorCode cause_code_;
};

}  // namespace flockmtl
