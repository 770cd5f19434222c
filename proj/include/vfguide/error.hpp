#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vfg {

enum class Errc {
  InvalidArgument,
  UnknownFrame,
  CyclicFrameGraph,
  DegenerateMotion,
  EmptyStack,
  DegenerateInput,
  StaleInput,
  TumorOutOfBounds,
  EmptyTrajectory,
  DegenerateSpecimen,
  ConfigError,
  ConnectionLost,
  RuntimeError,
  NameTooLong,
  OversizeBody,
  BadMagicOrVersion,
  ChecksumMismatch,
  Truncated,
  MalformedHeader,
  MalformedBody,
  SlowConsumer,
};

constexpr std::string_view to_string(Errc e) {
  switch (e) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnknownFrame: return "UnknownFrame";
    case Errc::CyclicFrameGraph: return "CyclicFrameGraph";
    case Errc::DegenerateMotion: return "DegenerateMotion";
    case Errc::EmptyStack: return "EmptyStack";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::StaleInput: return "StaleInput";
    case Errc::TumorOutOfBounds: return "TumorOutOfBounds";
    case Errc::EmptyTrajectory: return "EmptyTrajectory";
    case Errc::DegenerateSpecimen: return "DegenerateSpecimen";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ConnectionLost: return "ConnectionLost";
    case Errc::RuntimeError: return "RuntimeError";
    case Errc::NameTooLong: return "NameTooLong";
    case Errc::OversizeBody: return "OversizeBody";
    case Errc::BadMagicOrVersion: return "BadMagicOrVersion";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::Truncated: return "Truncated";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::MalformedBody: return "MalformedBody";
    case Errc::SlowConsumer: return "SlowConsumer";
  }
  return "Unknown";
}

/// Library-wide exception carrying a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace vfg
