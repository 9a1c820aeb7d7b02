#include "mlbcap/error.hpp"

namespace mlbcap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "IO_ERROR";
    case ErrorCode::Config: return "CONFIG_ERROR";
    case ErrorCode::MalformedLine: return "MALFORMED_LINE";
    case ErrorCode::ImageRequired: return "IMAGE_REQUIRED";
    case ErrorCode::CandidatesIncomplete: return "CANDIDATES_INCOMPLETE";
    case ErrorCode::BackendUnavailable: return "BACKEND_UNAVAILABLE";
    case ErrorCode::CapabilityError: return "CAPABILITY_ERROR";
    case ErrorCode::BackendRejected: return "BACKEND_REJECTED";
    case ErrorCode::ParseNoObject: return "PARSE_NO_OBJECT";
    case ErrorCode::ParseInvalid: return "PARSE_INVALID";
    case ErrorCode::JudgeParse: return "JUDGE_PARSE";
    case ErrorCode::JudgeLabel: return "JUDGE_LABEL";
    case ErrorCode::JudgeConflict: return "JUDGE_CONFLICT";
    case ErrorCode::EmptyInput: return "EMPTY_INPUT";
    case ErrorCode::RangeError: return "RANGE_ERROR";
    case ErrorCode::ShapeError: return "SHAPE_ERROR";
    case ErrorCode::Degenerate: return "DEGENERATE";
    case ErrorCode::MissingRef: return "MISSING_REF";
    case ErrorCode::Validation: return "VALIDATION";
    case ErrorCode::Conflict: return "CONFLICT";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::Unauthorized: return "UNAUTHORIZED";
  }
  return "UNKNOWN";
}

}  // namespace mlbcap
