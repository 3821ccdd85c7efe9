#include "seqnet/error.hpp"

namespace seqnet {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::GeometryKindMismatch: return "GeometryKindMismatch";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateNorm: return "DegenerateNorm";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoNegativesAvailable: return "NoNegativesAvailable";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace seqnet
