#include "title_forge/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "title_forge/error.hpp"

namespace title_forge {

TransformerScorer::TransformerScorer(const Transformer& model, std::span<const TokenId> source)
    : model_(model), encoded_(model.encode(source)) {}

std::vector<double> TransformerScorer::log_probs(std::span<const TokenId> prefix) const {
  auto logits = model_.next_token_logits(prefix, encoded_);
  double max = -std::numeric_limits<double>::infinity();
  for (float l : logits) max = std::max(max, static_cast<double>(l));
  double sum = 0.0;
  for (float l : logits) sum += std::exp(static_cast<double>(l) - max);
  const double log_z = max + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - log_z;
  return out;
}

double Hypothesis::normalized(double alpha) const {
  const auto len = length();
  if (len == 0) return log_prob;
  return log_prob / std::pow(static_cast<double>(len), alpha);
}

namespace {

void rank(std::vector<Hypothesis>& hyps, double alpha) {
  std::sort(hyps.begin(), hyps.end(), [alpha](const Hypothesis& a, const Hypothesis& b) {
    const double sa = a.normalized(alpha), sb = b.normalized(alpha);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

Hypothesis greedy_decode(const StepScorer& scorer, std::size_t max_len) {
  if (max_len == 0) throw Error(Errc::InvalidArgument, "max_len must be positive");
  Hypothesis h;
  h.tokens.push_back(special::kBos);
  while (h.length() < max_len) {
    auto lp = scorer.log_probs(h.tokens);
    const auto tok = static_cast<TokenId>(argmax(lp));
    h.tokens.push_back(tok);
    h.log_prob += lp[static_cast<std::size_t>(tok)];
    if (tok == special::kEos) {
      h.finished = true;
      break;
    }
  }
  return h;
}

std::vector<Hypothesis> beam_search(const StepScorer& scorer, const BeamConfig& config) {
  if (config.beam_width == 0) throw Error(Errc::InvalidArgument, "beam_width must be at least 1");
  if (config.max_len == 0) throw Error(Errc::InvalidArgument, "max_len must be positive");

  struct Candidate {
    std::size_t parent;
    TokenId token;
    double log_prob;
  };

  std::vector<Hypothesis> live(1);
  live[0].tokens.push_back(special::kBos);
  std::vector<Hypothesis> finished;
  std::vector<Candidate> candidates;

  for (std::size_t step = 0; step < config.max_len && !live.empty(); ++step) {
    candidates.clear();
    for (std::size_t p = 0; p < live.size(); ++p) {
      auto lp = scorer.log_probs(live[p].tokens);
      for (std::size_t tok = 0; tok < lp.size(); ++tok)
        candidates.push_back({p, static_cast<TokenId>(tok), live[p].log_prob + lp[tok]});
    }
    // Live hypotheses share a length, so comparing parent sequences then the
    // new token orders the extended sequences lexicographically.
    auto better = [&live](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return live[a.parent].tokens < live[b.parent].tokens;
      return a.token < b.token;
    };
    const std::size_t keep = std::min(config.beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);

    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = candidates[i];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      if (c.token == special::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  finished.insert(finished.end(), std::make_move_iterator(live.begin()), std::make_move_iterator(live.end()));
  rank(finished, config.length_penalty);
  if (finished.size() > config.beam_width) finished.resize(config.beam_width);
  return finished;
}

std::vector<Hypothesis> exhaustive_search(const StepScorer& scorer, std::size_t max_len, double length_penalty) {
  if (max_len == 0) throw Error(Errc::InvalidArgument, "max_len must be positive");
  std::vector<Hypothesis> out;
  std::vector<Hypothesis> frontier(1);
  frontier[0].tokens.push_back(special::kBos);
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<Hypothesis> next;
    for (const auto& h : frontier) {
      auto lp = scorer.log_probs(h.tokens);
      for (std::size_t tok = 0; tok < lp.size(); ++tok) {
        Hypothesis child = h;
        child.tokens.push_back(static_cast<TokenId>(tok));
        child.log_prob = h.log_prob + lp[tok];
        if (static_cast<TokenId>(tok) == special::kEos) {
          child.finished = true;
          out.push_back(std::move(child));
        } else {
          next.push_back(std::move(child));
        }
      }
    }
    frontier = std::move(next);
  }
  out.insert(out.end(), std::make_move_iterator(frontier.begin()), std::make_move_iterator(frontier.end()));
  rank(out, length_penalty);
  return out;
}

namespace {

std::size_t clamp_len(const Transformer& model, std::size_t max_len) {
  return std::min(max_len, model.config().max_decoder_len);
}

}  // namespace

Hypothesis greedy_decode(const Transformer& model, const ModelInput& input, std::size_t max_len) {
  TransformerScorer scorer(model, input.token_ids);
  return greedy_decode(scorer, clamp_len(model, max_len));
}

std::vector<Hypothesis> beam_search(const Transformer& model, const ModelInput& input, BeamConfig config) {
  TransformerScorer scorer(model, input.token_ids);
  config.max_len = clamp_len(model, config.max_len);
  return beam_search(scorer, config);
}

double rescore(const StepScorer& scorer, std::span<const TokenId> tokens) {
  double total = 0.0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    auto lp = scorer.log_probs(tokens.subspan(0, i));
    total += lp.at(static_cast<std::size_t>(tokens[i]));
  }
  return total;
}

std::string hypothesis_text(const Vocabulary& vocab, const Hypothesis& hypothesis) {
  return vocab.decode(hypothesis.tokens);
}

}  // namespace title_forge
