#include "title_forge/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>

namespace title_forge::html {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

struct Tag {
  std::string name;  // lowercase, without '/'
  bool closing = false;
  std::size_t end = 0;  // index one past '>'
};

// Parses a tag starting at text[pos] == '<'. Comments and declarations come
// back with an empty name. Returns nullopt when '<' does not open a tag.
std::optional<Tag> parse_tag(std::string_view text, std::size_t pos) {
  if (pos + 1 >= text.size()) return std::nullopt;
  if (text.substr(pos, 4) == "<!--") {
    auto close = text.find("-->", pos + 4);
    Tag t;
    t.end = close == std::string_view::npos ? text.size() : close + 3;
    return t;
  }
  std::size_t i = pos + 1;
  Tag t;
  if (text[i] == '/') {
    t.closing = true;
    ++i;
  }
  if (i >= text.size()) return std::nullopt;
  if (text[i] == '!' || text[i] == '?') {
    auto close = text.find('>', i);
    t.end = close == std::string_view::npos ? text.size() : close + 1;
    return t;
  }
  if (!std::isalpha(static_cast<unsigned char>(text[i]))) return std::nullopt;
  std::size_t name_begin = i;
  while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '-')) ++i;
  t.name = lower(text.substr(name_begin, i - name_begin));
  // Skip attributes, honouring quoted values that may contain '>'.
  char quote = 0;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      t.end = i + 1;
      return t;
    }
  }
  t.end = text.size();
  return t;
}

bool is_block_tag(const std::string& name) {
  static constexpr std::array<std::string_view, 24> kBlock = {
      "p",  "div", "br", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6",
      "blockquote", "pre", "hr", "table", "tr", "td", "th", "dl", "dt", "dd",
      "section", "article"};
  return std::find(kBlock.begin(), kBlock.end(), name) != kBlock.end();
}

std::size_t skip_space(std::string_view text, std::size_t pos) {
  while (pos < text.size() && is_space(text[pos])) ++pos;
  return pos;
}

// Text content of a fragment: tags dropped, entities decoded.
std::string strip_tags(std::string_view fragment) {
  std::string raw;
  std::size_t i = 0;
  while (i < fragment.size()) {
    if (fragment[i] == '<') {
      if (auto tag = parse_tag(fragment, i)) {
        i = tag->end;
        continue;
      }
    }
    raw.push_back(fragment[i++]);
  }
  return decode_entities(raw);
}

// Finds `</name` case-insensitively from pos.
std::size_t find_close(std::string_view text, std::size_t pos, std::string_view name) {
  std::string needle = "</" + std::string(name);
  auto hay = text.substr(pos);
  auto it = std::search(hay.begin(), hay.end(), needle.begin(), needle.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  });
  return it == hay.end() ? std::string_view::npos : pos + static_cast<std::size_t>(it - hay.begin());
}

}  // namespace

std::string decode_entities(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '&') {
      out.push_back(text[i++]);
      continue;
    }
    auto semi = text.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back(text[i++]);
      continue;
    }
    std::string_view name = text.substr(i + 1, semi - i - 1);
    bool done = true;
    if (name == "amp") out.push_back('&');
    else if (name == "lt") out.push_back('<');
    else if (name == "gt") out.push_back('>');
    else if (name == "quot") out.push_back('"');
    else if (name == "apos") out.push_back('\'');
    else if (name.size() >= 2 && name[0] == '#') {
      std::uint32_t cp = 0;
      std::from_chars_result r{};
      if (name[1] == 'x' || name[1] == 'X') {
        r = std::from_chars(name.data() + 2, name.data() + name.size(), cp, 16);
      } else {
        r = std::from_chars(name.data() + 1, name.data() + name.size(), cp, 10);
      }
      if (r.ec == std::errc() && r.ptr == name.data() + name.size()) {
        append_utf8(out, cp);
      } else {
        done = false;
      }
    } else {
      done = false;
    }
    if (done) {
      i = semi + 1;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

BodySegments segment_body(std::string_view body) {
  BodySegments seg;
  std::string prose;
  std::string pending_text;
  auto flush_text = [&] {
    prose += decode_entities(pending_text);
    pending_text.clear();
  };

  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] != '<') {
      pending_text.push_back(body[i++]);
      continue;
    }
    auto tag = parse_tag(body, i);
    if (!tag) {
      pending_text.push_back(body[i++]);
      continue;
    }
    if (tag->name == "pre" && !tag->closing) {
      std::size_t j = skip_space(body, tag->end);
      if (j < body.size() && body[j] == '<') {
        auto inner = parse_tag(body, j);
        if (inner && inner->name == "code" && !inner->closing) {
          std::size_t content_begin = inner->end;
          std::size_t content_end = find_close(body, content_begin, "code");
          if (content_end == std::string_view::npos) content_end = body.size();
          seg.code_blocks.push_back(trim(strip_tags(body.substr(content_begin, content_end - content_begin))));
          // Resume after </code> and the matching </pre>, if present.
          std::size_t k = content_end;
          if (k < body.size()) {
            auto close_code = parse_tag(body, k);
            k = close_code ? close_code->end : body.size();
            std::size_t after = skip_space(body, k);
            if (after < body.size() && body[after] == '<') {
              auto close_pre = parse_tag(body, after);
              if (close_pre && close_pre->closing && close_pre->name == "pre") k = close_pre->end;
            }
          }
          flush_text();
          prose.push_back(' ');
          i = k;
          continue;
        }
      }
    }
    if (is_block_tag(tag->name)) {
      flush_text();
      prose.push_back(' ');
    }
    i = tag->end;
  }
  flush_text();
  seg.description = collapse_whitespace(prose);
  return seg;
}

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string render_body(std::string_view description, std::string_view code) {
  std::string out = "<p>" + escape(description) + "</p>";
  if (!code.empty()) out += "\n<pre><code>" + escape(code) + "</code></pre>";
  return out;
}

}  // namespace title_forge::html
