#include "patchlab/error.hpp"

namespace patchlab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kNumericDomain: return "numeric-domain";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kAddress: return "address";
    case ErrorCode::kCapacity: return "capacity";
    case ErrorCode::kLockViolation: return "lock-violation";
    case ErrorCode::kState: return "state";
    case ErrorCode::kIncompleteReport: return "incomplete-report";
    case ErrorCode::kTrainingFailure: return "training-failure";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kUndefinedDenominator: return "undefined-denominator";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace patchlab
