#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "title_forge/corpus.hpp"
#include "title_forge/decoding.hpp"
#include "title_forge/model.hpp"
#include "title_forge/tokenizer.hpp"
#include "title_forge/training.hpp"

namespace title_forge {

/// Lowercases ASCII and splits on every run of non-alphanumeric bytes.
/// Bytes ≥ 0x80 count as alphanumeric so UTF-8 words stay whole.
std::vector<std::string> eval_tokenize(std::string_view text);

/// Precision, recall and F1, each in [0, 1]; F1 is 0 when P + R is 0.
struct RougeComponent {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeScore {
  RougeComponent rouge1;
  RougeComponent rouge2;
  RougeComponent rougeL;
};

/// Clipped n-gram overlap. All zero when either side has no n-gram.
RougeComponent rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n);

/// Longest-common-subsequence score. All zero for an empty side.
RougeComponent rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Rouge-1, Rouge-2 and Rouge-L of two raw strings under eval_tokenize.
RougeScore rouge(std::string_view candidate, std::string_view reference);

/// Unweighted mean of per-pair scores. Throws Error(LengthMismatch),
/// Error(EmptyList).
RougeScore corpus_rouge(std::span<const std::string> candidates, std::span<const std::string> references);

/// Okapi BM25 over bag-of-words documents. Immutable after construction.
class Bm25Index {
 public:
  static constexpr double kK1 = 1.2;
  static constexpr double kB = 0.75;

  /// One document per triplet: eval_tokenize(description ⊕ " " ⊕ code).
  /// Throws Error(EmptyCorpus).
  static Bm25Index build(std::span<const PostTriplet> training);

  /// Throws Error(EmptyCorpus) without documents or when every document is
  /// empty; Error(LengthMismatch) if titles and documents differ in count.
  Bm25Index(std::vector<std::vector<std::string>> documents, std::vector<std::string> titles);

  std::size_t size() const noexcept { return lengths_.size(); }
  double average_length() const noexcept { return average_length_; }
  std::size_t length(std::size_t doc) const { return lengths_.at(doc); }
  std::size_t document_frequency(const std::string& term) const;
  std::size_t term_frequency(std::size_t doc, const std::string& term) const;
  /// ln((N − df + 0.5) / (df + 0.5) + 1), always positive.
  double idf(const std::string& term) const;
  const std::string& title(std::size_t doc) const { return titles_.at(doc); }

  /// Σ over query tokens (repeats count again) of
  /// idf · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl)).
  double score(std::span<const std::string> query, std::size_t doc) const;

  /// Every document (or the top_k when top_k > 0) by score descending,
  /// ties by ascending document id.
  std::vector<std::pair<std::size_t, double>> rank(std::span<const std::string> query, std::size_t top_k = 0) const;

 private:
  struct Posting {
    std::size_t doc;
    std::size_t tf;
  };
  std::unordered_map<std::string, std::vector<Posting>> postings_;  // postings sorted by doc
  std::vector<std::size_t> lengths_;
  std::vector<std::string> titles_;
  double average_length_ = 0.0;
};

/// Anything that proposes a title for a post.
class TitleGenerator {
 public:
  virtual ~TitleGenerator() = default;
  virtual std::string name() const = 0;
  virtual std::string generate(const PostTriplet& post, InputMode mode) const = 0;
};

/// Best beam-search hypothesis of a trained model.
class ModelTitleGenerator final : public TitleGenerator {
 public:
  ModelTitleGenerator(const Transformer& model, const Vocabulary& vocab, BeamConfig beam = {});
  std::string name() const override { return "model"; }
  std::string generate(const PostTriplet& post, InputMode mode) const override;

 private:
  const Transformer& model_;
  const Vocabulary& vocab_;
  BeamConfig beam_;
};

/// Retrieval baseline: the title of the rank-1 training post.
class Bm25TitleGenerator final : public TitleGenerator {
 public:
  explicit Bm25TitleGenerator(Bm25Index index) : index_(std::move(index)) {}
  std::string name() const override { return "bm25"; }
  std::string generate(const PostTriplet& post, InputMode mode) const override;
  const Bm25Index& index() const noexcept { return index_; }

 private:
  Bm25Index index_;
};

struct LanguageReport {
  Language language = Language::Java;
  std::size_t count = 0;
  RougeScore scores;
};

struct EvaluationReport {
  std::string system;
  InputMode input_mode = InputMode::Both;
  std::vector<LanguageReport> languages;
};

struct LanguageTestSet {
  Language language = Language::Java;
  std::vector<PostTriplet> posts;
};

/// Generates one title per test post and scores each language separately.
/// Throws Error(EmptyTestSet) if no test set is given or any is empty.
EvaluationReport evaluate(const TitleGenerator& generator, std::span<const LanguageTestSet> test_sets, InputMode mode);

/// One JSON record per language; scores are percentages rounded to 3 decimals.
std::string report_jsonl(const EvaluationReport& report);

}  // namespace title_forge
