#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddfl {

enum class ErrorCode {
  kInvalidParam,
  kEmptyDataset,
  kDimensionMismatch,
  kLayoutMismatch,
  kNonFinite,
  kBadMagic,
  kTruncatedFile,
  kCountMismatch,
  kUnknownVariant,
  kDatasetMissing,
  kInvalidGamma,
  kTooFewSamples,
  kInfeasibleOneClass,
  kEmptyHistogram,
  kNoReports,
  kZeroTotalWeight,
  kEmptyInput,
  kZeroMean,
  kLengthMismatch,
  kInvalidInputs,
  kConfigInvalid,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (tests, the CLI exit-code mapping) can branch on kind, not message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ddfl
