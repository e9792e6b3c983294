#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bclr {

enum class ErrorCode {
  MalformedPairing,
  OddRowCount,
  NoDiscordantPairs,
  DimensionMismatch,
  SeparationDetected,
  RankDeficient,
  SingularSandwich,
  InsufficientConcordant,
  NonFiniteState,
  AllDivergent,
  InsufficientDraws,
  EmptyDraws,
  TooFewDraws,
  EmptyStudy,
  MalformedInput,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace bclr
