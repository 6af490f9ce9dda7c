#include "blocktower/common/error.hpp"

namespace blocktower {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidScene: return "InvalidScene";
    case ErrorCode::kNonAxisAligned: return "NonAxisAligned";
    case ErrorCode::kDivergedSimulation: return "DivergedSimulation";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kExhaustedSampling: return "ExhaustedSampling";
    case ErrorCode::kTimeOutOfRange: return "TimeOutOfRange";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kConsistencyFailure: return "ConsistencyFailure";
    case ErrorCode::kCorruptFile: return "CorruptFile";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::kEmptyForeground: return "EmptyForeground";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kConstantInput: return "ConstantInput";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidScene:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kTimeOutOfRange:
      return true;
    default:
      return false;
  }
}

}  // namespace blocktower
