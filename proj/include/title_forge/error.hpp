#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace title_forge {

enum class Errc {
  // corpus
  ParseError,
  NoCode,
  EmptyDescription,
  InsufficientData,
  EmptyCorpus,
  // tokenizer
  TargetTooSmall,
  UnknownId,
  EmptyInput,
  BadVocabularyFile,
  // tensor
  ShapeMismatch,
  NotScalar,
  TapeClosed,
  EmptyTarget,
  TargetOutOfRange,
  // model
  DegenerateMask,
  LengthExceeded,
  BadConfig,
  BadCheckpoint,
  // training
  WrongArity,
  MissingGrad,
  MissingTask,
  // evaluation
  LengthMismatch,
  EmptyList,
  EmptyTestSet,
  // plumbing
  Io,
  InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Malformed dump input; `offset` is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(std::uint64_t offset, const std::string& message)
      : Error(Errc::ParseError, message + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace title_forge
