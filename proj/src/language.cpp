#include "title_forge/language.hpp"

#include <algorithm>
#include <cctype>

#include "title_forge/error.hpp"

namespace title_forge {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ParseError: return "ParseError";
    case Errc::NoCode: return "NoCode";
    case Errc::EmptyDescription: return "EmptyDescription";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::TargetTooSmall: return "TargetTooSmall";
    case Errc::UnknownId: return "UnknownId";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::BadVocabularyFile: return "BadVocabularyFile";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NotScalar: return "NotScalar";
    case Errc::TapeClosed: return "TapeClosed";
    case Errc::EmptyTarget: return "EmptyTarget";
    case Errc::TargetOutOfRange: return "TargetOutOfRange";
    case Errc::DegenerateMask: return "DegenerateMask";
    case Errc::LengthExceeded: return "LengthExceeded";
    case Errc::BadConfig: return "BadConfig";
    case Errc::BadCheckpoint: return "BadCheckpoint";
    case Errc::WrongArity: return "WrongArity";
    case Errc::MissingGrad: return "MissingGrad";
    case Errc::MissingTask: return "MissingTask";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyList: return "EmptyList";
    case Errc::EmptyTestSet: return "EmptyTestSet";
    case Errc::Io: return "Io";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view language_id(Language lang) noexcept {
  switch (lang) {
    case Language::Java: return "java";
    case Language::CSharp: return "csharp";
    case Language::Python: return "python";
    case Language::JavaScript: return "javascript";
  }
  return "";
}

std::string_view language_display_name(Language lang) noexcept {
  switch (lang) {
    case Language::Java: return "Java";
    case Language::CSharp: return "C#";
    case Language::Python: return "Python";
    case Language::JavaScript: return "JavaScript";
  }
  return "";
}

std::string_view task_prefix(Language lang) noexcept {
  switch (lang) {
    case Language::Java: return "Java: ";
    case Language::CSharp: return "C#: ";
    case Language::Python: return "Python: ";
    case Language::JavaScript: return "JS: ";
  }
  return "";
}

std::string_view language_tag(Language lang) noexcept {
  switch (lang) {
    case Language::Java: return "java";
    case Language::CSharp: return "c#";
    case Language::Python: return "python";
    case Language::JavaScript: return "javascript";
  }
  return "";
}

std::optional<Language> parse_language(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Language lang : kAllLanguages) {
    if (lower == language_id(lang) || lower == language_tag(lang)) return lang;
    std::string display(language_display_name(lang));
    std::transform(display.begin(), display.end(), display.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == display) return lang;
  }
  if (lower == "js") return Language::JavaScript;
  return std::nullopt;
}

}  // namespace title_forge
