#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace orion {

enum class Errc {
  InvalidParams,
  LengthMismatch,
  LevelMismatch,
  ScaleMismatch,
  RangeViolation,
  RotationOutOfRange,
  LevelUnderflow,
  UndefinedHandle,
  RedefinedHandle,
  ShapeMismatch,
  Format,
  UnknownKind,
  CycleDetected,
  UnsupportedTopology,
  Infeasible,
  ZeroRange,
  NonFinite,
  InvalidArgument,
  Io,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::LevelMismatch: return "LevelMismatch";
    case Errc::ScaleMismatch: return "ScaleMismatch";
    case Errc::RangeViolation: return "RangeViolation";
    case Errc::RotationOutOfRange: return "RotationOutOfRange";
    case Errc::LevelUnderflow: return "LevelUnderflow";
    case Errc::UndefinedHandle: return "UndefinedHandle";
    case Errc::RedefinedHandle: return "RedefinedHandle";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::Format: return "Format";
    case Errc::UnknownKind: return "UnknownKind";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::UnsupportedTopology: return "UnsupportedTopology";
    case Errc::Infeasible: return "Infeasible";
    case Errc::ZeroRange: return "ZeroRange";
    case Errc::NonFinite: return "NonFinite";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

// Every failure in the library is reported through this one exception type;
// code() says what went wrong, what() carries the detail and provenance.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Process exit codes used by the command-line driver.
inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::Infeasible:
      return 3;
    case Errc::LevelMismatch:
    case Errc::ScaleMismatch:
    case Errc::RangeViolation:
    case Errc::RotationOutOfRange:
    case Errc::LevelUnderflow:
    case Errc::UndefinedHandle:
    case Errc::RedefinedHandle:
      return 4;
    default:
      return 2;
  }
}

}  // namespace orion
