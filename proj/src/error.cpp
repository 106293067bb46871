#include "bwflow/error.hpp"

namespace bwflow {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kNonHermitian: return "NonHermitian";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNotPsd: return "NotPSD";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kKernelNotNested: return "KernelNotNested";
    case ErrorCode::kLambdaOutOfRange: return "LambdaOutOfRange";
    case ErrorCode::kGridMismatch: return "GridMismatch";
    case ErrorCode::kAllDegenerate: return "AllDegenerate";
    case ErrorCode::kPointwiseFailure: return "PointwiseFailure";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kKOutOfRange: return "KOutOfRange";
    case ErrorCode::kLambdaTooLarge: return "LambdaTooLarge";
    case ErrorCode::kEmptyWindow: return "EmptyWindow";
    case ErrorCode::kSingularMoments: return "SingularMoments";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kSingularDesign: return "SingularDesign";
    case ErrorCode::kLagTooLarge: return "LagTooLarge";
    case ErrorCode::kEmptyFreqGrid: return "EmptyFreqGrid";
    case ErrorCode::kGridTooCoarse: return "GridTooCoarse";
    case ErrorCode::kWindowTooLarge: return "WindowTooLarge";
    case ErrorCode::kRaggedSeries: return "RaggedSeries";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormat: return "Format";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace bwflow
