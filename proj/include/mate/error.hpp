#pragma once

#include <stdexcept>
#include <string>

namespace mate {

enum class ErrorCode {
  AllPointsIdentical,
  GTooLarge,
  KTooLarge,
  MaskRatioOutOfRange,
  EmptySet,
  CloudTooSmall,
  ShapeMismatch,
  EmptyVisibleSet,
  NoMaskedTokens,
  StateMismatch,
  CorruptBlob,
  DivergenceDetected,
  NonFiniteLoss,
  IOFailure,
  InvalidConfig,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::AllPointsIdentical: return "AllPointsIdentical";
    case ErrorCode::GTooLarge: return "GTooLarge";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::MaskRatioOutOfRange: return "MaskRatioOutOfRange";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::CloudTooSmall: return "CloudTooSmall";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyVisibleSet: return "EmptyVisibleSet";
    case ErrorCode::NoMaskedTokens: return "NoMaskedTokens";
    case ErrorCode::StateMismatch: return "StateMismatch";
    case ErrorCode::CorruptBlob: return "CorruptBlob";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace mate
