#include "title_forge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "title_forge/error.hpp"
#include "title_forge/html.hpp"

namespace title_forge {

std::vector<std::string> parse_tags(std::string_view tags) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char c : tags) {
    if (c == '<' || c == '>' || c == '|') {
      flush();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

bool passes_quality_rules(const RawPost& post) {
  if (post.score < 5) return false;
  if (!post.accepted_answer_id) return false;
  auto segments = html::segment_body(post.body_html);
  return std::any_of(segments.code_blocks.begin(), segments.code_blocks.end(),
                     [](const std::string& block) { return !block.empty(); });
}

std::vector<Language> languages_for(const RawPost& post) {
  std::vector<Language> out;
  for (Language lang : kAllLanguages) {
    if (std::find(post.tags.begin(), post.tags.end(), language_tag(lang)) != post.tags.end()) {
      out.push_back(lang);
    }
  }
  return out;
}

PostTriplet extract_triplet(const RawPost& post, Language language) {
  auto segments = html::segment_body(post.body_html);
  std::string code;
  for (const auto& block : segments.code_blocks) {
    if (block.empty()) continue;
    if (!code.empty()) code.push_back('\n');
    code += block;
  }
  if (code.empty()) throw Error(Errc::NoCode, "post " + std::to_string(post.id) + " has no code block");
  if (segments.description.empty()) {
    throw Error(Errc::EmptyDescription, "post " + std::to_string(post.id) + " has no prose");
  }
  if (html::collapse_whitespace(post.title).empty()) {
    throw Error(Errc::EmptyInput, "post " + std::to_string(post.id) + " has an empty title");
  }
  PostTriplet t;
  t.post_id = post.id;
  t.language = language;
  t.description = std::move(segments.description);
  t.code = std::move(code);
  t.title = post.title;
  return t;
}

CorpusSplit split_corpus(std::vector<PostTriplet> triplets, std::uint64_t seed, std::size_t train_n,
                         std::size_t test_n) {
  if (train_n + test_n > triplets.size()) {
    throw Error(Errc::InsufficientData, "need " + std::to_string(train_n + test_n) + " triplets, have " +
                                            std::to_string(triplets.size()));
  }
  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const PostTriplet& a, const PostTriplet& b) { return a.post_id < b.post_id; });
  std::mt19937_64 rng(seed);
  std::shuffle(triplets.begin(), triplets.end(), rng);

  CorpusSplit split;
  split.seed = seed;
  auto train_end = triplets.begin() + static_cast<std::ptrdiff_t>(train_n);
  auto test_end = train_end + static_cast<std::ptrdiff_t>(test_n);
  split.train.assign(std::make_move_iterator(triplets.begin()), std::make_move_iterator(train_end));
  split.test.assign(std::make_move_iterator(train_end), std::make_move_iterator(test_end));
  split.validation.assign(std::make_move_iterator(test_end), std::make_move_iterator(triplets.end()));
  return split;
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

namespace {

FieldStats field_stats(std::vector<std::size_t> lengths, std::size_t cutoff) {
  FieldStats s;
  s.cutoff = cutoff;
  std::sort(lengths.begin(), lengths.end());
  double total = 0.0;
  std::size_t below = 0;
  for (auto n : lengths) {
    total += static_cast<double>(n);
    if (n < cutoff) ++below;
  }
  const auto count = lengths.size();
  s.average = total / static_cast<double>(count);
  s.fraction_below = static_cast<double>(below) / static_cast<double>(count);
  s.median = count % 2 == 1 ? static_cast<double>(lengths[count / 2])
                            : 0.5 * static_cast<double>(lengths[count / 2 - 1] + lengths[count / 2]);
  // Mode: most frequent length, smallest on ties (lengths are sorted).
  std::size_t best_run = 0;
  for (std::size_t i = 0; i < count;) {
    std::size_t j = i;
    while (j < count && lengths[j] == lengths[i]) ++j;
    if (j - i > best_run) {
      best_run = j - i;
      s.mode = lengths[i];
    }
    i = j;
  }
  return s;
}

}  // namespace

CorpusStats corpus_stats(std::span<const PostTriplet> triplets) {
  if (triplets.empty()) throw Error(Errc::EmptyCorpus, "no triplets to summarise");
  std::vector<std::size_t> code, desc, title;
  for (const auto& t : triplets) {
    code.push_back(whitespace_token_count(t.code));
    desc.push_back(whitespace_token_count(t.description));
    title.push_back(whitespace_token_count(t.title));
  }
  CorpusStats stats;
  stats.count = triplets.size();
  stats.code = field_stats(std::move(code), 256);
  stats.description = field_stats(std::move(desc), 256);
  stats.title = field_stats(std::move(title), 16);
  return stats;
}

std::string triplet_to_line(const PostTriplet& t) {
  nlohmann::ordered_json j;
  j["post_id"] = t.post_id;
  j["language"] = language_id(t.language);
  j["description"] = t.description;
  j["code"] = t.code;
  j["title"] = t.title;
  // dump() escapes control characters, so a record never spans lines.
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

PostTriplet triplet_from_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad triplet record: ") + e.what());
  }
  PostTriplet t;
  try {
    t.post_id = j.at("post_id").get<std::int64_t>();
    auto lang = parse_language(j.at("language").get<std::string>());
    if (!lang) throw Error(Errc::InvalidArgument, "unknown language in triplet record");
    t.language = *lang;
    t.description = j.at("description").get<std::string>();
    t.code = j.at("code").get<std::string>();
    t.title = j.at("title").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad triplet record: ") + e.what());
  }
  return t;
}

void write_triplets(const std::filesystem::path& path, std::span<const PostTriplet> triplets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (const auto& t : triplets) out << triplet_to_line(t) << '\n';
  if (!out) throw Error(Errc::Io, "write failed for " + path.string());
}

std::vector<PostTriplet> read_triplets(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::vector<PostTriplet> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(triplet_from_line(line));
  }
  return out;
}

std::string_view split_name(SplitName split) noexcept {
  switch (split) {
    case SplitName::Train: return "train";
    case SplitName::Validation: return "validation";
    case SplitName::Test: return "test";
  }
  return "";
}

std::filesystem::path split_path(const std::filesystem::path& dir, Language lang, SplitName split) {
  return dir / (std::string(language_id(lang)) + "." + std::string(split_name(split)) + ".jsonl");
}

CorpusBuildReport build_corpus(const CorpusBuildOptions& options) {
  std::ifstream in(options.dump, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open dump " + options.dump.string());
  std::filesystem::create_directories(options.out_dir);

  CorpusBuildReport report;
  std::array<std::vector<PostTriplet>, kNumTasks> per_language;
  DumpReader reader(in);
  while (auto post = reader.next()) {
    if (!passes_quality_rules(*post)) continue;
    ++report.passed_rules;
    for (Language lang : languages_for(*post)) {
      if (std::find(options.languages.begin(), options.languages.end(), lang) == options.languages.end()) continue;
      try {
        per_language[task_index(lang)].push_back(extract_triplet(*post, lang));
      } catch (const Error& e) {
        ++report.extraction_failures;
        spdlog::debug("skipping post {}: {}", post->id, e.what());
      }
    }
  }
  report.dump = reader.stats();

  for (Language lang : options.languages) {
    auto idx = task_index(lang);
    report.kept[idx] = per_language[idx].size();
    auto split = split_corpus(std::move(per_language[idx]), options.seed, options.train_n, options.test_n);
    write_triplets(split_path(options.out_dir, lang, SplitName::Train), split.train);
    write_triplets(split_path(options.out_dir, lang, SplitName::Validation), split.validation);
    write_triplets(split_path(options.out_dir, lang, SplitName::Test), split.test);
    report.train[idx] = split.train.size();
    report.validation[idx] = split.validation.size();
    report.test[idx] = split.test.size();
  }
  return report;
}

}  // namespace title_forge
