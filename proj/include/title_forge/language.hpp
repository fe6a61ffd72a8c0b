#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace title_forge {

/// The four title-generation tasks. The enumerator order is the task order
/// used everywhere a per-task array appears.
enum class Language { Java = 0, CSharp = 1, Python = 2, JavaScript = 3 };

inline constexpr std::size_t kNumTasks = 4;
inline constexpr std::array<Language, kNumTasks> kAllLanguages = {
    Language::Java, Language::CSharp, Language::Python, Language::JavaScript};

constexpr std::size_t task_index(Language lang) noexcept { return static_cast<std::size_t>(lang); }

/// Lowercase identifier used in file names, CLI flags and the wire format
/// ("java", "csharp", "python", "javascript").
std::string_view language_id(Language lang) noexcept;

/// Display name ("Java", "C#", "Python", "JavaScript").
std::string_view language_display_name(Language lang) noexcept;

/// Literal task prefix placed in front of the encoder input.
std::string_view task_prefix(Language lang) noexcept;

/// Stack Overflow tag that selects this language's corpus.
std::string_view language_tag(Language lang) noexcept;

/// Accepts the identifier, the display name, or the tag, case-insensitively.
std::optional<Language> parse_language(std::string_view text);

}  // namespace title_forge
