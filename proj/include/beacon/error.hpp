#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace beacon {

enum class ErrorKind {
  ContractViolation,
  EmptyDomain,
  InsufficientPool,
  IngestError,
  EmptyPartition,
  DimensionMismatch,
  RowCountMismatch,
  NonFinite,
  UnknownSampleId,
  MissingValidation,
  ProtocolViolation,
  DegenerateWeights,
  LengthMismatch,
  EmptyInput,
  OneClassPlan,
  ConfigError,
  IoError,
  ReplayMismatch,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ContractViolation: return "ContractViolation";
    case ErrorKind::EmptyDomain: return "EmptyDomain";
    case ErrorKind::InsufficientPool: return "InsufficientPool";
    case ErrorKind::IngestError: return "IngestError";
    case ErrorKind::EmptyPartition: return "EmptyPartition";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::RowCountMismatch: return "RowCountMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::UnknownSampleId: return "UnknownSampleId";
    case ErrorKind::MissingValidation: return "MissingValidation";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::DegenerateWeights: return "DegenerateWeights";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::OneClassPlan: return "OneClassPlan";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ReplayMismatch: return "ReplayMismatch";
  }
  return "Unknown";
}

/// Every domain failure raised by the library. The kind is stable and is what
/// the CLI reports in its machine-readable error output.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace beacon
