#include "emadapt/error.hpp"

namespace emadapt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kUnsupportedDepth: return "UnsupportedDepth";
    case ErrorCode::kLabelOverflow: return "LabelOverflow";
    case ErrorCode::kEmptyRun: return "EmptyRun";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kNoLabels: return "NoLabels";
    case ErrorCode::kInvalidSteps: return "InvalidSteps";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDegenerateDistances: return "DegenerateDistances";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kMissingModel: return "MissingModel";
    case ErrorCode::kUnknownDomain: return "UnknownDomain";
    case ErrorCode::kEmptyCandidates: return "EmptyCandidates";
    case ErrorCode::kPoolExhausted: return "PoolExhausted";
    case ErrorCode::kInvalidBatch: return "InvalidBatch";
    case ErrorCode::kInsufficientTrainingBudget: return "InsufficientTrainingBudget";
    case ErrorCode::kNoSeeds: return "NoSeeds";
    case ErrorCode::kZeroPixels: return "ZeroPixels";
    case ErrorCode::kNonSquare: return "NonSquare";
    case ErrorCode::kItemMismatch: return "ItemMismatch";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kTooManyAssignments: return "TooManyAssignments";
    case ErrorCode::kEmptyGroup: return "EmptyGroup";
    case ErrorCode::kSpecInfeasible: return "SpecInfeasible";
    case ErrorCode::kParse: return "ParseError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace emadapt
