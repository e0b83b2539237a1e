#include "iotad/error.hpp"

namespace iotad {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedHeader: return "MALFORMED_HEADER";
    case ErrorCode::kUnsupportedLinktype: return "UNSUPPORTED_LINKTYPE";
    case ErrorCode::kParseError: return "PARSE_ERROR";
    case ErrorCode::kMissingField: return "MISSING_FIELD";
    case ErrorCode::kOutOfOrder: return "OUT_OF_ORDER";
    case ErrorCode::kEmptyInput: return "EMPTY_INPUT";
    case ErrorCode::kEmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::kDiverged: return "DIVERGED";
    case ErrorCode::kDuplicateId: return "DUPLICATE_ID";
    case ErrorCode::kDuplicateAddr: return "DUPLICATE_ADDR";
    case ErrorCode::kUnknownDevice: return "UNKNOWN_DEVICE";
    case ErrorCode::kDeviceIsolated: return "DEVICE_ISOLATED";
    case ErrorCode::kUnknownParent: return "UNKNOWN_PARENT";
    case ErrorCode::kTreeFinalized: return "TREE_FINALIZED";
    case ErrorCode::kUnknownKey: return "UNKNOWN_KEY";
    case ErrorCode::kParentPending: return "PARENT_PENDING";
    case ErrorCode::kNodeNotAnomalous: return "NODE_NOT_ANOMALOUS";
    case ErrorCode::kInvalidPlan: return "INVALID_PLAN";
    case ErrorCode::kInvalidConfig: return "INVALID_CONFIG";
    case ErrorCode::kInvalidRule: return "INVALID_RULE";
    case ErrorCode::kJoinAmbiguous: return "JOIN_AMBIGUOUS";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kModelKindUnknown: return "MODEL_KIND_UNKNOWN";
    case ErrorCode::kInsufficientEvents: return "INSUFFICIENT_EVENTS";
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kIoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace iotad
