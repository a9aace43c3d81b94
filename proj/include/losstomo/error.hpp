#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace losstomo {

enum class ErrorCode {
  CycleDetected,
  MultipleRoots,
  RateOutOfRange,
  InvalidTopology,
  DivisionByZeroPath,
  LeafNode,
  OrderOutOfRange,
  IncompleteStats,
  InvalidData,
  NoRootInRange,
  AllWeightsZero,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library is reported through this type; the code lets
// callers (and tests) branch on the failure kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::RateOutOfRange: return "RateOutOfRange";
    case ErrorCode::InvalidTopology: return "InvalidTopology";
    case ErrorCode::DivisionByZeroPath: return "DivisionByZeroPath";
    case ErrorCode::LeafNode: return "LeafNode";
    case ErrorCode::OrderOutOfRange: return "OrderOutOfRange";
    case ErrorCode::IncompleteStats: return "IncompleteStats";
    case ErrorCode::InvalidData: return "InvalidData";
    case ErrorCode::NoRootInRange: return "NoRootInRange";
    case ErrorCode::AllWeightsZero: return "AllWeightsZero";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace losstomo
