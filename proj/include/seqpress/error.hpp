// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seqpress {

enum class ErrorCode {
  // data errors
  NoBeatsDetected,
  FiducialNotFound,
  InsufficientBeats,
  DegenerateFeature,
  NonPositiveTarget,
  SourceTooShort,
  EmptySplit,
  InsufficientCalibration,
  InsufficientData,
  LengthMismatch,
  EmptyInput,
  MissingSession,
  InvalidFormat,
  Io,
  // shape errors
  DimensionMismatch,
  CacheMismatch,
  ShapeMismatch,
  // numerical failures
  NonFiniteActivation,
  DivergedLoss,
  SingularCovariance,
  // caller errors
  InvalidArgument,
};

enum class ErrorCategory { Usage, Data, Numerical };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace seqpress
