// SPDX-License-Identifier: Apache-2.0
#include "seqpress/error.hpp"

namespace seqpress {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoBeatsDetected: return "NoBeatsDetected";
    case ErrorCode::FiducialNotFound: return "FiducialNotFound";
    case ErrorCode::InsufficientBeats: return "InsufficientBeats";
    case ErrorCode::DegenerateFeature: return "DegenerateFeature";
    case ErrorCode::NonPositiveTarget: return "NonPositiveTarget";
    case ErrorCode::SourceTooShort: return "SourceTooShort";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::InsufficientCalibration: return "InsufficientCalibration";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingSession: return "MissingSession";
    case ErrorCode::InvalidFormat: return "InvalidFormat";
    case ErrorCode::Io: return "Io";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CacheMismatch: return "CacheMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteActivation:
    case ErrorCode::DivergedLoss:
    case ErrorCode::SingularCovariance:
      return ErrorCategory::Numerical;
    case ErrorCode::InvalidArgument:
      return ErrorCategory::Usage;
    default:
      return ErrorCategory::Data;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace seqpress
