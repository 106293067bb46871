#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bwflow {

// Numbering is part of the C ABI (bwf_status mirrors it one-to-one).
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kNonHermitian = 2,
  kNonFinite = 3,
  kNotPsd = 4,
  kDimMismatch = 5,
  kKernelNotNested = 6,
  kLambdaOutOfRange = 7,
  kGridMismatch = 8,
  kAllDegenerate = 9,
  kPointwiseFailure = 10,
  kKTooLarge = 11,
  kKOutOfRange = 12,
  kLambdaTooLarge = 13,
  kEmptyWindow = 14,
  kSingularMoments = 15,
  kNonConvergence = 16,
  kSingularDesign = 17,
  kLagTooLarge = 18,
  kEmptyFreqGrid = 19,
  kGridTooCoarse = 20,
  kWindowTooLarge = 21,
  kRaggedSeries = 22,
  kIo = 23,
  kFormat = 24,
  kConfig = 25,
  kInternal = 99,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

}  // namespace bwflow
