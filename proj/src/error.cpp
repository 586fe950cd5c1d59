#include "ddfl/error.hpp"

namespace ddfl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidParam: return "InvalidParam";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kLayoutMismatch: return "LayoutMismatch";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kCountMismatch: return "CountMismatch";
    case ErrorCode::kUnknownVariant: return "UnknownVariant";
    case ErrorCode::kDatasetMissing: return "DatasetMissing";
    case ErrorCode::kInvalidGamma: return "InvalidGamma";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kInfeasibleOneClass: return "InfeasibleOneClass";
    case ErrorCode::kEmptyHistogram: return "EmptyHistogram";
    case ErrorCode::kNoReports: return "NoReports";
    case ErrorCode::kZeroTotalWeight: return "ZeroTotalWeight";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kZeroMean: return "ZeroMean";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kInvalidInputs: return "InvalidInputs";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace ddfl
