#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emadapt {

enum class ErrorCode {
  kIo,
  kMalformedHeader,
  kTruncatedPayload,
  kUnsupportedDepth,
  kLabelOverflow,
  kEmptyRun,
  kShapeError,
  kNoLabels,
  kInvalidSteps,
  kInvalidConfig,
  kLengthMismatch,
  kDegenerateDistances,
  kEmptySet,
  kMissingModel,
  kUnknownDomain,
  kEmptyCandidates,
  kPoolExhausted,
  kInvalidBatch,
  kInsufficientTrainingBudget,
  kNoSeeds,
  kZeroPixels,
  kNonSquare,
  kItemMismatch,
  kOutOfRange,
  kTooManyAssignments,
  kEmptyGroup,
  kSpecInfeasible,
  kParse,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI and the Python bindings can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace emadapt
