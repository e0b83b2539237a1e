#pragma once

#include <stdexcept>
#include <string>

namespace iotad {

// Stable error classes. The CLI maps each class to a fixed exit code.
enum class ErrorCode {
  kMalformedHeader,
  kUnsupportedLinktype,
  kParseError,
  kMissingField,
  kOutOfOrder,
  kEmptyInput,
  kEmptyDataset,
  kDiverged,
  kDuplicateId,
  kDuplicateAddr,
  kUnknownDevice,
  kDeviceIsolated,
  kUnknownParent,
  kTreeFinalized,
  kUnknownKey,
  kParentPending,
  kNodeNotAnomalous,
  kInvalidPlan,
  kInvalidConfig,
  kInvalidRule,
  kJoinAmbiguous,
  kDimensionMismatch,
  kModelKindUnknown,
  kInsufficientEvents,
  kInvalidArgument,
  kIoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace iotad
