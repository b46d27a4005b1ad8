#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sequer {

enum class Errc {
  MalformedLine,
  InvalidSpec,
  TooFewPairs,
  EmptyInput,
  EmptyCorpus,
  UnknownId,
  ShapeMismatch,
  AllMaskedRow,
  SequenceTooLong,
  EmptyTrainingSet,
  InvalidBeamSize,
  EmptyQuery,
  EmptyHypothesis,
  LengthMismatch,
  UnknownTargetPost,
  BindFailure,
  CorruptCheckpoint,
  CorruptModelFile,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::UnknownId: return "UnknownId";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::AllMaskedRow: return "AllMaskedRow";
    case Errc::SequenceTooLong: return "SequenceTooLong";
    case Errc::EmptyTrainingSet: return "EmptyTrainingSet";
    case Errc::InvalidBeamSize: return "InvalidBeamSize";
    case Errc::EmptyQuery: return "EmptyQuery";
    case Errc::EmptyHypothesis: return "EmptyHypothesis";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UnknownTargetPost: return "UnknownTargetPost";
    case Errc::BindFailure: return "BindFailure";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::CorruptModelFile: return "CorruptModelFile";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace sequer
