#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace title_forge::html {

/// Decodes &amp; &lt; &gt; &quot; &apos; and numeric (&#NN; / &#xHH;)
/// references. Any other named reference is left untouched.
std::string decode_entities(std::string_view text);

/// Replaces every run of ASCII whitespace with one space and trims the ends.
std::string collapse_whitespace(std::string_view text);

/// A post body split into its two modalities.
struct BodySegments {
  /// Contents of each `<pre><code>` block in document order, tags stripped,
  /// entities decoded, surrounding whitespace trimmed.
  std::vector<std::string> code_blocks;
  /// Everything outside those blocks as plain text. Inline `<code>` spans
  /// stay here.
  std::string description;
};

BodySegments segment_body(std::string_view body_html);

/// Minimal HTML rendering of a description/code pair, used for round-trip checks.
std::string render_body(std::string_view description, std::string_view code);

/// Escapes the characters that are significant in HTML text.
std::string escape(std::string_view text);

}  // namespace title_forge::html
