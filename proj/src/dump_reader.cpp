#include <charconv>
#include <cstring>
#include <deque>
#include <istream>
#include <sstream>

#include <expat.h>

#include "title_forge/corpus.hpp"
#include "title_forge/error.hpp"

namespace title_forge {
namespace {

std::optional<std::int64_t> parse_int(const char* text) {
  if (text == nullptr) return std::nullopt;
  std::int64_t value = 0;
  const char* end = text + std::strlen(text);
  auto r = std::from_chars(text, end, value);
  if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
  return value;
}

}  // namespace

struct DumpReader::Impl {
  std::istream& in;
  std::vector<char> buffer;
  XML_Parser parser = nullptr;
  std::deque<RawPost> ready;
  DumpStats stats;
  bool finished = false;

  Impl(std::istream& stream, std::size_t chunk_size) : in(stream), buffer(chunk_size) {
    parser = XML_ParserCreate("UTF-8");
    XML_SetUserData(parser, this);
    XML_SetStartElementHandler(parser, &Impl::on_start);
  }

  ~Impl() { XML_ParserFree(parser); }

  static void on_start(void* user, const XML_Char* name, const XML_Char** attrs) {
    auto* self = static_cast<Impl*>(user);
    if (std::strcmp(name, "row") != 0) return;
    self->on_row(attrs);
  }

  void on_row(const XML_Char** attrs) {
    ++stats.rows;
    const char* id = nullptr;
    const char* type = nullptr;
    const char* score = nullptr;
    const char* accepted = nullptr;
    const char* tags = nullptr;
    const char* title = nullptr;
    const char* body = nullptr;
    for (std::size_t i = 0; attrs[i] != nullptr; i += 2) {
      const char* key = attrs[i];
      const char* value = attrs[i + 1];
      if (std::strcmp(key, "Id") == 0) id = value;
      else if (std::strcmp(key, "PostTypeId") == 0) type = value;
      else if (std::strcmp(key, "Score") == 0) score = value;
      else if (std::strcmp(key, "AcceptedAnswerId") == 0) accepted = value;
      else if (std::strcmp(key, "Tags") == 0) tags = value;
      else if (std::strcmp(key, "Title") == 0) title = value;
      else if (std::strcmp(key, "Body") == 0) body = value;
    }
    auto post_id = parse_int(id);
    auto post_type = parse_int(type);
    if (!post_id || *post_id <= 0 || !post_type) {
      ++stats.skipped;
      return;
    }
    if (*post_type != 1) {
      ++stats.non_questions;
      return;
    }
    auto post_score = parse_int(score);
    if (!post_score || tags == nullptr || title == nullptr || body == nullptr) {
      ++stats.skipped;
      return;
    }
    RawPost post;
    post.id = *post_id;
    post.post_type = PostType::Question;
    post.score = *post_score;
    if (accepted != nullptr) {
      auto accepted_id = parse_int(accepted);
      if (!accepted_id) {
        ++stats.skipped;
        return;
      }
      post.accepted_answer_id = *accepted_id;
    }
    post.tags = parse_tags(tags);
    if (post.tags.empty()) {
      ++stats.skipped;
      return;
    }
    post.title = title;
    post.body_html = body;
    ++stats.questions;
    ready.push_back(std::move(post));
  }

  [[noreturn]] void fail() {
    auto offset = static_cast<std::uint64_t>(XML_GetCurrentByteIndex(parser));
    throw ParseError(offset, XML_ErrorString(XML_GetErrorCode(parser)));
  }

  // Feeds one chunk; returns false once the final chunk has been parsed.
  bool feed() {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    auto got = static_cast<int>(in.gcount());
    bool last = got == 0 || in.eof();
    if (XML_Parse(parser, buffer.data(), got, last ? 1 : 0) == XML_STATUS_ERROR) fail();
    return !last;
  }
};

DumpReader::DumpReader(std::istream& in, std::size_t chunk_size)
    : impl_(std::make_unique<Impl>(in, chunk_size)) {}

DumpReader::~DumpReader() = default;

std::optional<RawPost> DumpReader::next() {
  while (impl_->ready.empty() && !impl_->finished) {
    impl_->finished = !impl_->feed();
  }
  if (impl_->ready.empty()) return std::nullopt;
  RawPost post = std::move(impl_->ready.front());
  impl_->ready.pop_front();
  return post;
}

const DumpStats& DumpReader::stats() const { return impl_->stats; }

std::vector<RawPost> parse_dump(std::string_view xml, DumpStats* stats) {
  std::istringstream in{std::string(xml)};
  DumpReader reader(in);
  std::vector<RawPost> posts;
  while (auto post = reader.next()) posts.push_back(std::move(*post));
  if (stats != nullptr) *stats = reader.stats();
  return posts;
}

}  // namespace title_forge
