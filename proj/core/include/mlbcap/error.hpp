#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlbcap {

enum class ErrorCode {
  Io,
  Config,
  MalformedLine,
  ImageRequired,
  CandidatesIncomplete,
  BackendUnavailable,
  CapabilityError,
  BackendRejected,
  ParseNoObject,
  ParseInvalid,
  JudgeParse,
  JudgeLabel,
  JudgeConflict,
  EmptyInput,
  RangeError,
  ShapeError,
  Degenerate,
  MissingRef,
  Validation,
  Conflict,
  NotFound,
  Unauthorized,
};

/// Stable machine-readable name, e.g. "IMAGE_REQUIRED".
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// BACKEND_REJECTED carries the terminal HTTP status.
class BackendRejected : public Error {
 public:
  BackendRejected(int status, const std::string& message)
      : Error(ErrorCode::BackendRejected, message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace mlbcap
