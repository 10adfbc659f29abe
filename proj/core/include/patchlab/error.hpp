#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace patchlab {

enum class ErrorCode {
  kInvalidArgument,
  kNumericDomain,
  kConflict,
  kAddress,
  kCapacity,
  kLockViolation,
  kState,
  kIncompleteReport,
  kTrainingFailure,
  kConfig,
  kUndefinedDenominator,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every recoverable failure in the library is reported as an Error carrying
// one of the codes above; the CLI maps codes to process exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace patchlab
