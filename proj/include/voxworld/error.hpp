#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxworld {

enum class ErrorCode {
  MalformedContainer,
  UnsupportedEncoding,
  InvalidArgument,
  EmptyClip,
  UnknownWindowKind,
  NonPowerOfTwoFrame,
  ConfigMismatch,
  InvalidMarkers,
  UnknownClip,
  InsufficientData,
  IoFailure,
  SchemaVersionMismatch,
  MissingFile,
  DimensionMismatch,
  NumericalDivergence,
  MissingHead,
  ConfigHashMismatch,
  UnknownObject,
  UntrainedHeads,
  EmptyScene,
  UnknownTurn,
  JobRunning,
  UnknownJob,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedContainer: return "MalformedContainer";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyClip: return "EmptyClip";
    case ErrorCode::UnknownWindowKind: return "UnknownWindowKind";
    case ErrorCode::NonPowerOfTwoFrame: return "NonPowerOfTwoFrame";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::InvalidMarkers: return "InvalidMarkers";
    case ErrorCode::UnknownClip: return "UnknownClip";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NumericalDivergence: return "NumericalDivergence";
    case ErrorCode::MissingHead: return "MissingHead";
    case ErrorCode::ConfigHashMismatch: return "ConfigHashMismatch";
    case ErrorCode::UnknownObject: return "UnknownObject";
    case ErrorCode::UntrainedHeads: return "UntrainedHeads";
    case ErrorCode::EmptyScene: return "EmptyScene";
    case ErrorCode::UnknownTurn: return "UnknownTurn";
    case ErrorCode::JobRunning: return "JobRunning";
    case ErrorCode::UnknownJob: return "UnknownJob";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this type. `path` names
/// the offending field, file or entity when there is one (e.g.
/// "words[1].end_frame" or "train_labels.u32").
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string path = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message),
        path_(std::move(path)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& path() const noexcept { return path_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::string path_;
};

}  // namespace voxworld
