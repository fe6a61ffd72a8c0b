#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "title_forge/corpus.hpp"
#include "title_forge/decoding.hpp"
#include "title_forge/evaluation.hpp"
#include "title_forge/model.hpp"
#include "title_forge/tokenizer.hpp"
#include "title_forge/training.hpp"

namespace support {

using namespace title_forge;

std::filesystem::path fixture(const std::string& name);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

/// Posts from fixtures/sample_posts.jsonl.
std::vector<PostTriplet> sample_posts();

/// Deterministic synthetic post whose title follows from its description
/// and code ("How to <verb> a <noun>"); index < 16 gives distinct titles.
PostTriplet synthetic_post(Language language, std::size_t index);
std::vector<PostTriplet> synthetic_posts(Language language, std::size_t count);

/// Every description, code and title of the posts plus the task prefixes.
std::vector<std::string> vocabulary_texts(std::span<const PostTriplet> posts);

/// Step scorer backed by a callable.
class FunctionScorer final : public StepScorer {
 public:
  using Fn = std::function<std::vector<double>(std::span<const TokenId>)>;
  FunctionScorer(std::size_t vocab, Fn fn) : vocab_(vocab), fn_(std::move(fn)) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::vector<double> log_probs(std::span<const TokenId> prefix) const override { return fn_(prefix); }

 private:
  std::size_t vocab_;
  Fn fn_;
};

/// log-softmax of arbitrary scores, in double.
std::vector<double> log_softmax(std::span<const double> scores);

/// Config for small models: given widths and vocabulary, short max lengths.
ModelConfig small_config(std::size_t d_model, std::size_t n_heads, std::size_t n_layers, std::size_t d_ff,
                         std::size_t vocab, std::size_t max_enc = 24, std::size_t max_dec = 12);

/// Random token ids in [kCount, vocab).
std::vector<TokenId> random_ids(std::mt19937_64& rng, std::size_t vocab, std::size_t length);

/// Example with random source and title ids.
Example random_example(std::mt19937_64& rng, std::size_t vocab, std::size_t src_len, std::size_t title_len);

// ---- independent oracles -----------------------------------------------

/// Rouge-n by enumerating every candidate n-gram against a consumable copy
/// of the reference n-gram multiset.
RougeComponent oracle_rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref, std::size_t n);

/// Rouge-L with a full (m+1)×(n+1) LCS table.
RougeComponent oracle_rouge_l(const std::vector<std::string>& cand, const std::vector<std::string>& ref);

/// BM25 by scanning raw token lists for every (document, query term) pair.
std::vector<double> oracle_bm25(const std::vector<std::vector<std::string>>& docs,
                                const std::vector<std::string>& query, double k1 = 1.2, double b = 0.75);

/// Sorted (doc, score) by score descending, doc ascending.
std::vector<std::pair<std::size_t, double>> oracle_rank(const std::vector<double>& scores);

/// Random token lists over a small alphabet so overlaps are common.
std::vector<std::string> random_words(std::mt19937_64& rng, std::size_t max_len, std::size_t alphabet);

}  // namespace support
