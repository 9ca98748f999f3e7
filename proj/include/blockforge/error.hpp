#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace blockforge {

enum class ErrorCode {
  NetworkUnavailable,
  CloneFailed,
  UnresolvableRelativeImport,
  BlockNotFound,
  AmbiguousBlockName,
  EmitCollision,
  InterpreterMissing,
  SandboxSetupFailed,
  DomainError,
  ConfigError,
  StoreError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every recoverable failure in the toolchain is reported through this type;
// callers branch on code(), never on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Transient errors are eligible for the orchestrator's retry policy.
  bool transient() const noexcept {
    return code_ == ErrorCode::NetworkUnavailable || code_ == ErrorCode::CloneFailed ||
           code_ == ErrorCode::SandboxSetupFailed || code_ == ErrorCode::IoError;
  }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NetworkUnavailable: return "NetworkUnavailable";
    case ErrorCode::CloneFailed: return "CloneFailed";
    case ErrorCode::UnresolvableRelativeImport: return "UnresolvableRelativeImport";
    case ErrorCode::BlockNotFound: return "BlockNotFound";
    case ErrorCode::AmbiguousBlockName: return "AmbiguousBlockName";
    case ErrorCode::EmitCollision: return "EmitCollision";
    case ErrorCode::InterpreterMissing: return "InterpreterMissing";
    case ErrorCode::SandboxSetupFailed: return "SandboxSetupFailed";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::StoreError: return "StoreError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace blockforge
