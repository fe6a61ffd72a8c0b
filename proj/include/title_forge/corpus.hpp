#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "title_forge/language.hpp"

namespace title_forge {

enum class PostType { Question, Answer, Other };

/// One `row` of a Stack Exchange Posts.xml dump, before any extraction.
struct RawPost {
  std::int64_t id = 0;
  PostType post_type = PostType::Other;
  std::int64_t score = 0;
  std::optional<std::int64_t> accepted_answer_id;
  std::vector<std::string> tags;  // lowercase
  std::string title;
  std::string body_html;
};

/// A mined ⟨description, code, title⟩ unit for one language task.
struct PostTriplet {
  std::int64_t post_id = 0;
  Language language = Language::Java;
  std::string description;
  std::string code;
  std::string title;

  bool operator==(const PostTriplet&) const = default;
};

struct CorpusSplit {
  std::vector<PostTriplet> train;
  std::vector<PostTriplet> validation;
  std::vector<PostTriplet> test;
  std::uint64_t seed = 0;
};

struct DumpStats {
  std::uint64_t rows = 0;
  std::uint64_t questions = 0;
  std::uint64_t non_questions = 0;
  /// Rows dropped because a required attribute was absent or unparsable.
  std::uint64_t skipped = 0;
};

/// Pull-based streaming reader over a Posts.xml byte stream. Only question
/// rows are yielded; memory stays bounded by the chunk size plus the largest
/// single row.
class DumpReader {
 public:
  explicit DumpReader(std::istream& in, std::size_t chunk_size = 1 << 16);
  ~DumpReader();
  DumpReader(const DumpReader&) = delete;
  DumpReader& operator=(const DumpReader&) = delete;

  /// Next question post, or nullopt at end of input. Throws ParseError on
  /// malformed XML, including input truncated mid-row.
  std::optional<RawPost> next();

  const DumpStats& stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Reads every question of a whole dump held in memory.
std::vector<RawPost> parse_dump(std::string_view xml, DumpStats* stats = nullptr);

/// Splits a Tags attribute in either "<a><b>" or "|a|b|" form.
std::vector<std::string> parse_tags(std::string_view tags);

/// Score ≥ 5, an accepted answer, and at least one non-empty <pre><code> block.
bool passes_quality_rules(const RawPost& post);

/// Target languages named by the post's tags, in task order. A post tagged
/// with several target languages belongs to each of them.
std::vector<Language> languages_for(const RawPost& post);

/// Throws Error(NoCode) / Error(EmptyDescription) / Error(EmptyInput) for an
/// empty title.
PostTriplet extract_triplet(const RawPost& post, Language language);

/// Seeded shuffle, then train_n to train, test_n to test, the rest to validation.
/// Input order does not matter: triplets are sorted by post_id first.
CorpusSplit split_corpus(std::vector<PostTriplet> triplets, std::uint64_t seed, std::size_t train_n,
                         std::size_t test_n);

struct FieldStats {
  double average = 0.0;
  std::size_t mode = 0;
  double median = 0.0;
  std::size_t cutoff = 0;
  /// Share of items with fewer than `cutoff` tokens, in [0, 1].
  double fraction_below = 0.0;
};

struct CorpusStats {
  std::size_t count = 0;
  FieldStats code;
  FieldStats description;
  FieldStats title;
};

std::size_t whitespace_token_count(std::string_view text);

/// Throws Error(EmptyCorpus) for an empty list.
CorpusStats corpus_stats(std::span<const PostTriplet> triplets);

// Line-delimited record files: one JSON object per line with fields
// post_id, language, description, code, title.
std::string triplet_to_line(const PostTriplet& triplet);
PostTriplet triplet_from_line(std::string_view line);
void write_triplets(const std::filesystem::path& path, std::span<const PostTriplet> triplets);
std::vector<PostTriplet> read_triplets(const std::filesystem::path& path);

enum class SplitName { Train, Validation, Test };
std::string_view split_name(SplitName split) noexcept;
/// "<dir>/<language>.<split>.jsonl"
std::filesystem::path split_path(const std::filesystem::path& dir, Language lang, SplitName split);

struct CorpusBuildOptions {
  std::filesystem::path dump;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::size_t train_n = 60000;
  std::size_t test_n = 5000;
  std::vector<Language> languages{kAllLanguages.begin(), kAllLanguages.end()};
};

struct CorpusBuildReport {
  DumpStats dump;
  std::uint64_t passed_rules = 0;
  std::uint64_t extraction_failures = 0;
  std::array<std::size_t, kNumTasks> kept{};
  std::array<std::size_t, kNumTasks> train{};
  std::array<std::size_t, kNumTasks> validation{};
  std::array<std::size_t, kNumTasks> test{};
};

/// parse → filter → extract → split → write, one file per language per split.
CorpusBuildReport build_corpus(const CorpusBuildOptions& options);

}  // namespace title_forge
