#pragma once

#include <stdexcept>
#include <string>

namespace polyseq {

/// Error categories used across the library. Tests match on the code,
/// messages are for humans.
enum class Errc {
  kMalformedHeader,
  kUnsupportedFormat,
  kUnterminatedNote,
  kAmbiguousTracks,
  kInvalidStream,
  kEmptyPiece,
  kOutOfVocabulary,
  kUnknownToken,
  kEmptyVocabulary,
  kEmptyCorpus,
  kShapeMismatch,
  kNonFiniteGradient,
  kSequenceTooShort,
  kOutOfRangeToken,
  kDivergenceDetected,
  kIoError,
  kConfigError,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::kMalformedHeader: return "MalformedHeader";
    case Errc::kUnsupportedFormat: return "UnsupportedFormat";
    case Errc::kUnterminatedNote: return "UnterminatedNote";
    case Errc::kAmbiguousTracks: return "AmbiguousTracks";
    case Errc::kInvalidStream: return "InvalidStream";
    case Errc::kEmptyPiece: return "EmptyPiece";
    case Errc::kOutOfVocabulary: return "OutOfVocabulary";
    case Errc::kUnknownToken: return "UnknownToken";
    case Errc::kEmptyVocabulary: return "EmptyVocabulary";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kNonFiniteGradient: return "NonFiniteGradient";
    case Errc::kSequenceTooShort: return "SequenceTooShort";
    case Errc::kOutOfRangeToken: return "OutOfRangeToken";
    case Errc::kDivergenceDetected: return "DivergenceDetected";
    case Errc::kIoError: return "IoError";
    case Errc::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace polyseq
