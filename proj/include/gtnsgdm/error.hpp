#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gtnsgdm {

enum class ErrorKind {
  InvalidSize,
  UnsupportedGraph,
  NonPrimitive,
  InvalidParameter,
  EmptyInput,
  InvalidDimension,
  InvalidPartition,
  EmptyBatch,
  InvalidInput,
  Divergence,
  Config,
  InsufficientData,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-checkable category next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSize: return "invalid-size";
    case ErrorKind::UnsupportedGraph: return "unsupported-graph";
    case ErrorKind::NonPrimitive: return "non-primitive";
    case ErrorKind::InvalidParameter: return "invalid-parameter";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidPartition: return "invalid-partition";
    case ErrorKind::EmptyBatch: return "empty-batch";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Config: return "config";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace gtnsgdm
