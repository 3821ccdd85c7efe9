#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seqnet {

enum class ErrorCode {
  MalformedHeader,
  TruncatedData,
  NonFinite,
  ParseError,
  RowCountMismatch,
  GeometryKindMismatch,
  SequenceTooLong,
  InvalidSpec,
  ShapeMismatch,
  DegenerateNorm,
  DimensionMismatch,
  NoNegativesAvailable,
  TrainingDiverged,
  WindowOutOfRange,
  EmptyReference,
  MissingGroundTruth,
  IoError,
};

std::string_view error_name(ErrorCode code);

/// All library failures surface as this exception; `code()` identifies the
/// failure class and `what()` is prefixed with its name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace seqnet
