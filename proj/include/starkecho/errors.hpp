// errors.hpp - error codes raised by the simulator
#pragma once

#include <stdexcept>
#include <string>

namespace starkecho {

enum class ErrorCode {
  InvalidArgument,
  InvalidGrid,
  NonPositiveWidth,
  GridTooNarrow,
  CalibrationDiverged,
  OutOfRange,
  DirectionMismatch,
  ModeMismatch,
  GridMismatch,
  StepTooLarge,
  InvalidSchedule,
  TauTooSmall,
  NoEchoFound,
  TooThick,
  ConfigError,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace starkecho
