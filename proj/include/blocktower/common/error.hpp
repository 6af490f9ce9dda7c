#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace blocktower {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidScene,
  kNonAxisAligned,
  kDivergedSimulation,
  kInvalidConfig,
  kExhaustedSampling,
  kTimeOutOfRange,
  kIoFailure,
  kConsistencyFailure,
  kCorruptFile,
  kMissingFile,
  kShapeMismatch,
  kNonFiniteLoss,
  kEmptyTrainSet,
  kEmptyForeground,
  kDegenerateLabels,
  kConstantInput,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this exception type; `code()`
// identifies the contract that was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// True for errors caused by bad user input (configs, flags, files) rather
// than by a failure while doing the work.
bool is_validation_error(ErrorCode code);

}  // namespace blocktower
