#include "support.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <unistd.h>

#ifndef TITLE_FORGE_FIXTURES
#error "TITLE_FORGE_FIXTURES must name the fixture directory"
#endif

namespace support {

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(TITLE_FORGE_FIXTURES) / name; }

std::filesystem::path scratch_dir(const std::string& tag) {
  static std::uint64_t counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("title_forge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<PostTriplet> sample_posts() { return read_triplets(fixture("sample_posts.jsonl")); }

namespace {

constexpr std::array<const char*, 16> kVerbs = {"sort",  "reverse", "merge", "split",  "parse",  "format",
                                                "copy",  "filter",  "join",  "clear",  "count",  "search",
                                                "append", "remove", "print", "compare"};
constexpr std::array<const char*, 8> kNouns = {"list", "string", "map", "array", "file", "date", "set", "queue"};

}  // namespace

PostTriplet synthetic_post(Language language, std::size_t index) {
  const std::string verb = kVerbs[index % kVerbs.size()];
  const std::string noun = kNouns[(index + 3 * task_index(language)) % kNouns.size()];
  PostTriplet t;
  t.post_id = static_cast<std::int64_t>(1 + task_index(language) * 1000 + index);
  t.language = language;
  t.description = "I want to " + verb + " my " + noun + " but it fails";
  switch (language) {
    case Language::Java: t.code = noun + "." + verb + "();"; break;
    case Language::CSharp: t.code = noun + "." + verb + "(x);"; break;
    case Language::Python: t.code = verb + "(" + noun + ")"; break;
    case Language::JavaScript: t.code = noun + "." + verb + "(x)"; break;
  }
  t.title = "How to " + verb + " a " + noun;
  return t;
}

std::vector<PostTriplet> synthetic_posts(Language language, std::size_t count) {
  std::vector<PostTriplet> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_post(language, i));
  return out;
}

std::vector<std::string> vocabulary_texts(std::span<const PostTriplet> posts) {
  std::vector<std::string> texts;
  for (auto lang : kAllLanguages) texts.emplace_back(task_prefix(lang));
  for (const auto& p : posts) {
    texts.push_back(p.description);
    texts.push_back(p.code);
    texts.push_back(p.title);
  }
  return texts;
}

std::vector<double> log_softmax(std::span<const double> scores) {
  double max = -std::numeric_limits<double>::infinity();
  for (double s : scores) max = std::max(max, s);
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - max);
  const double log_z = max + std::log(sum);
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s - log_z);
  return out;
}

ModelConfig small_config(std::size_t d_model, std::size_t n_heads, std::size_t n_layers, std::size_t d_ff,
                         std::size_t vocab, std::size_t max_enc, std::size_t max_dec) {
  ModelConfig c;
  c.d_model = d_model;
  c.n_heads = n_heads;
  c.n_layers = n_layers;
  c.d_ff = d_ff;
  c.vocab_size = vocab;
  c.max_encoder_len = max_enc;
  c.max_decoder_len = max_dec;
  return c;
}

std::vector<TokenId> random_ids(std::mt19937_64& rng, std::size_t vocab, std::size_t length) {
  std::uniform_int_distribution<TokenId> pick(special::kCount, static_cast<TokenId>(vocab) - 1);
  std::vector<TokenId> ids(length);
  for (auto& id : ids) id = pick(rng);
  return ids;
}

Example random_example(std::mt19937_64& rng, std::size_t vocab, std::size_t src_len, std::size_t title_len) {
  Example ex;
  ex.source = random_ids(rng, vocab, src_len);
  auto title = random_ids(rng, vocab, title_len);
  ex.decoder_input.push_back(special::kBos);
  ex.decoder_input.insert(ex.decoder_input.end(), title.begin(), title.end());
  ex.target = title;
  ex.target.push_back(special::kEos);
  return ex;
}

namespace {

RougeComponent prf(double overlap, double cand_total, double ref_total) {
  RougeComponent c;
  if (cand_total == 0.0 || ref_total == 0.0) return c;
  c.precision = overlap / cand_total;
  c.recall = overlap / ref_total;
  if (c.precision + c.recall > 0.0) c.f1 = 2.0 * c.precision * c.recall / (c.precision + c.recall);
  return c;
}

std::vector<std::vector<std::string>> ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) out.emplace_back(tokens.begin() + i, tokens.begin() + i + n);
  return out;
}

}  // namespace

RougeComponent oracle_rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                              std::size_t n) {
  auto c = ngrams(cand, n);
  auto pool = ngrams(ref, n);
  const double ref_total = static_cast<double>(pool.size());
  std::size_t overlap = 0;
  for (const auto& g : c) {
    auto it = std::find(pool.begin(), pool.end(), g);
    if (it != pool.end()) {
      ++overlap;
      pool.erase(it);
    }
  }
  return prf(static_cast<double>(overlap), static_cast<double>(c.size()), ref_total);
}

RougeComponent oracle_rouge_l(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  const std::size_t m = cand.size(), n = ref.size();
  std::vector<std::vector<std::size_t>> table(m + 1, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      table[i][j] = cand[i - 1] == ref[j - 1] ? table[i - 1][j - 1] + 1 : std::max(table[i - 1][j], table[i][j - 1]);
  return prf(static_cast<double>(table[m][n]), static_cast<double>(m), static_cast<double>(n));
}

std::vector<double> oracle_bm25(const std::vector<std::vector<std::string>>& docs,
                                const std::vector<std::string>& query, double k1, double b) {
  const double n_docs = static_cast<double>(docs.size());
  double total_len = 0.0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  const double avgdl = total_len / n_docs;
  std::vector<double> scores(docs.size(), 0.0);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& term : query) {
      double df = 0.0;
      for (const auto& other : docs)
        if (std::find(other.begin(), other.end(), term) != other.end()) df += 1.0;
      const double tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), term));
      const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
      const double len = static_cast<double>(docs[d].size());
      scores[d] += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avgdl));
    }
  }
  return scores;
}

std::vector<std::pair<std::size_t, double>> oracle_rank(const std::vector<double>& scores) {
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.emplace_back(i, scores[i]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::vector<std::string> random_words(std::mt19937_64& rng, std::size_t max_len, std::size_t alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> word(0, alphabet - 1);
  std::vector<std::string> out(len(rng));
  for (auto& w : out) w = "w" + std::to_string(word(rng));
  return out;
}

}  // namespace support
