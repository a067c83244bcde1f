// Typed errors thrown by library operations. The C API maps these to status codes.
#pragma once

#include <stdexcept>
#include <string>

namespace wbdrc {

enum class ErrorCode {
  Ok = 0,
  Infeasible,
  Unbounded,
  MaxIterations,
  NotHurwitz,
  UnknownContactFrame,
  SingularBaseBlock,
  SingularD11,
  LegInStance,
  SqpDiverged,
  GainTooHighForStep,
  UnknownLink,
  SingularKKT,
  ConfigError,
  ControllerFault,
  InvalidArgument,
};

inline const char* errorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::UnknownContactFrame: return "UnknownContactFrame";
    case ErrorCode::SingularBaseBlock: return "SingularBaseBlock";
    case ErrorCode::SingularD11: return "SingularD11";
    case ErrorCode::LegInStance: return "LegInStance";
    case ErrorCode::SqpDiverged: return "SqpDiverged";
    case ErrorCode::GainTooHighForStep: return "GainTooHighForStep";
    case ErrorCode::UnknownLink: return "UnknownLink";
    case ErrorCode::SingularKKT: return "SingularKKT";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ControllerFault: return "ControllerFault";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(errorCodeName(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wbdrc
