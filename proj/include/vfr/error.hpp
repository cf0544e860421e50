#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vfr {

enum class ErrorCode {
  PreconditionViolated,
  ZeroNormVector,
  DimensionMismatch,
  EmptyInput,
  NonFiniteValue,
  TransportError,
  RequestRejected,
  EmptyCompletion,
  ImageUnreadable,
  CacheCorruption,
  EmptyTrainSet,
  UnparseableNameList,
  InsufficientContexts,
  EmptySupportSet,
  LengthMismatch,
  MissingGroundTruth,
  ClassifierArtifactCorrupt,
  FingerprintMismatch,
  InvalidManifest,
  InvalidConfig,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::RequestRejected: return "RequestRejected";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::ImageUnreadable: return "ImageUnreadable";
    case ErrorCode::CacheCorruption: return "CacheCorruption";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::UnparseableNameList: return "UnparseableNameList";
    case ErrorCode::InsufficientContexts: return "InsufficientContexts";
    case ErrorCode::EmptySupportSet: return "EmptySupportSet";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::ClassifierArtifactCorrupt: return "ClassifierArtifactCorrupt";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the engine carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 protected:
  struct Verbatim {};
  Error(Verbatim, ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

 private:
  ErrorCode code_;
};

/// An Error annotated with the pipeline stage it escaped from.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& inner)
      : Error(Verbatim{}, inner.code(), "[stage=" + stage + "] " + inner.what()), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

inline void precondition(bool condition, const std::string& message) {
  require(condition, ErrorCode::PreconditionViolated, message);
}

}  // namespace vfr
