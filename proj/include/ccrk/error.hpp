#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ccrk {

enum class ErrorCode {
  ZeroRow,
  EmptyInput,
  NonFiniteEvaluation,
  InvalidConfig,
  FormatError,
  DimensionMismatch,
  UnknownMagic,
  NotNormalized,
  DegenerateBatch,
  ShapeMismatch,
  AllMasked,
  EmptySequence,
  SingleLanguage,
  DegenerateDirection,
  AntipodalTexts,
  Divergence,
  IoError,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failure inside a file; offset is the byte position where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error(ErrorCode::FormatError, what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error(ErrorCode::Divergence, what + " at step " + std::to_string(step)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace ccrk
