#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "title_forge/model.hpp"
#include "title_forge/tokenizer.hpp"

namespace title_forge {

/// Source of next-token log-probabilities for a BOS-started prefix.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t vocab_size() const = 0;
  /// log P(· | prefix); prefix[0] is BOS.
  virtual std::vector<double> log_probs(std::span<const TokenId> prefix) const = 0;
};

/// Scores with a trained model against one encoded input.
class TransformerScorer final : public StepScorer {
 public:
  TransformerScorer(const Transformer& model, std::span<const TokenId> source);

  std::size_t vocab_size() const override { return model_.config().vocab_size; }
  std::vector<double> log_probs(std::span<const TokenId> prefix) const override;

 private:
  const Transformer& model_;
  EncoderOutput<float> encoded_;
};

struct Hypothesis {
  std::vector<TokenId> tokens;  // starts with BOS; ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;

  /// Generated tokens, counting EOS but not BOS.
  std::size_t length() const noexcept { return tokens.empty() ? 0 : tokens.size() - 1; }
  /// log_prob / length^alpha.
  double normalized(double alpha = 1.0) const;
};

struct BeamConfig {
  std::size_t beam_width = 5;
  /// Generated-token cap, EOS included.
  std::size_t max_len = 30;
  double length_penalty = 1.0;
};

/// Picks the arg-max token (lowest id on ties) until EOS or max_len.
Hypothesis greedy_decode(const StepScorer& scorer, std::size_t max_len);

/// Beam search. Every step expands each live hypothesis by every token and
/// keeps the beam_width best by cumulative log-probability (ties: smaller
/// token sequence). Hypotheses that emit EOS leave the beam. The search ends
/// when no live hypothesis remains or max_len tokens have been generated.
/// Finished and still-live hypotheses are ranked by length-normalized score
/// and the best beam_width are returned.
/// Throws Error(InvalidArgument) for beam_width 0 or max_len 0.
std::vector<Hypothesis> beam_search(const StepScorer& scorer, const BeamConfig& config);

/// Reference search that scores every token sequence up to max_len: every
/// EOS-terminated sequence plus every max_len sequence without EOS. Ranked
/// like beam_search. Cost is vocab^max_len, so only for tiny vocabularies.
std::vector<Hypothesis> exhaustive_search(const StepScorer& scorer, std::size_t max_len, double length_penalty = 1.0);

/// Decoding against a model and one encoder input; max_len is capped at the
/// model's max_decoder_len.
Hypothesis greedy_decode(const Transformer& model, const ModelInput& input, std::size_t max_len = 30);
std::vector<Hypothesis> beam_search(const Transformer& model, const ModelInput& input, BeamConfig config = {});

/// Sum of the scorer's log-probabilities along tokens[1..] given tokens[0..i).
double rescore(const StepScorer& scorer, std::span<const TokenId> tokens);

/// Generated text of a hypothesis (BOS, EOS and PAD dropped).
std::string hypothesis_text(const Vocabulary& vocab, const Hypothesis& hypothesis);

}  // namespace title_forge
