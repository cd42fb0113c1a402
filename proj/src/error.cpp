#include "ccrk/error.hpp"

namespace ccrk {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownMagic: return "UnknownMagic";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::SingleLanguage: return "SingleLanguage";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::AntipodalTexts: return "AntipodalTexts";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace ccrk
