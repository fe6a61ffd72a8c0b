#include "title_forge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "title_forge/error.hpp"

namespace title_forge {

std::vector<std::string> eval_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (word) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

namespace {

RougeComponent make_component(double overlap, double candidate_total, double reference_total) {
  RougeComponent c;
  c.precision = overlap / candidate_total;
  c.recall = overlap / reference_total;
  c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
  return c;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

RougeComponent rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n) {
  if (n == 0) throw Error(Errc::InvalidArgument, "n-gram order must be positive");
  if (candidate.size() < n || reference.size() < n) return {};
  auto cand = ngram_counts(candidate, n);
  auto ref = ngram_counts(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += std::min(count, it->second);
  }
  return make_component(static_cast<double>(overlap), static_cast<double>(candidate.size() - n + 1),
                        static_cast<double>(reference.size() - n + 1));
}

RougeComponent rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return {};
  // Two-row LCS table over reference positions.
  std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (std::size_t i = 1; i <= candidate.size(); ++i) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return make_component(static_cast<double>(prev[reference.size()]), static_cast<double>(candidate.size()),
                        static_cast<double>(reference.size()));
}

RougeScore rouge(std::string_view candidate, std::string_view reference) {
  auto c = eval_tokenize(candidate);
  auto r = eval_tokenize(reference);
  return {rouge_n(c, r, 1), rouge_n(c, r, 2), rouge_l(c, r)};
}

RougeScore corpus_rouge(std::span<const std::string> candidates, std::span<const std::string> references) {
  if (candidates.size() != references.size())
    throw Error(Errc::LengthMismatch, std::to_string(candidates.size()) + " candidates vs " +
                                          std::to_string(references.size()) + " references");
  if (candidates.empty()) throw Error(Errc::EmptyList, "no pairs to score");
  RougeScore total;
  auto add = [](RougeComponent& into, const RougeComponent& c) {
    into.precision += c.precision;
    into.recall += c.recall;
    into.f1 += c.f1;
  };
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto s = rouge(candidates[i], references[i]);
    add(total.rouge1, s.rouge1);
    add(total.rouge2, s.rouge2);
    add(total.rougeL, s.rougeL);
  }
  const double n = static_cast<double>(candidates.size());
  for (auto* c : {&total.rouge1, &total.rouge2, &total.rougeL}) {
    c->precision /= n;
    c->recall /= n;
    c->f1 /= n;
  }
  return total;
}

Bm25Index Bm25Index::build(std::span<const PostTriplet> training) {
  if (training.empty()) throw Error(Errc::EmptyCorpus, "no training posts for the BM25 index");
  std::vector<std::vector<std::string>> docs;
  std::vector<std::string> titles;
  docs.reserve(training.size());
  titles.reserve(training.size());
  for (const auto& t : training) {
    docs.push_back(eval_tokenize(t.description + " " + t.code));
    titles.push_back(t.title);
  }
  return Bm25Index(std::move(docs), std::move(titles));
}

Bm25Index::Bm25Index(std::vector<std::vector<std::string>> documents, std::vector<std::string> titles)
    : titles_(std::move(titles)) {
  if (documents.empty()) throw Error(Errc::EmptyCorpus, "no documents");
  if (documents.size() != titles_.size()) throw Error(Errc::LengthMismatch, "one title per document required");
  lengths_.reserve(documents.size());
  std::size_t total = 0;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    std::map<std::string, std::size_t> tf;
    for (auto& term : documents[d]) ++tf[term];
    for (auto& [term, count] : tf) postings_[term].push_back({d, count});
    lengths_.push_back(documents[d].size());
    total += documents[d].size();
  }
  if (total == 0) throw Error(Errc::EmptyCorpus, "every document is empty");
  average_length_ = static_cast<double>(total) / static_cast<double>(documents.size());
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

std::size_t Bm25Index::term_frequency(std::size_t doc, const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return 0;
  auto p = std::lower_bound(it->second.begin(), it->second.end(), doc,
                            [](const Posting& a, std::size_t d) { return a.doc < d; });
  return p != it->second.end() && p->doc == doc ? p->tf : 0;
}

double Bm25Index::idf(const std::string& term) const {
  const double n = static_cast<double>(size());
  const double df = static_cast<double>(document_frequency(term));
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double Bm25Index::score(std::span<const std::string> query, std::size_t doc) const {
  double s = 0.0;
  const double norm = kK1 * (1.0 - kB + kB * static_cast<double>(length(doc)) / average_length_);
  for (const auto& term : query) {
    const double tf = static_cast<double>(term_frequency(doc, term));
    if (tf == 0.0) continue;
    s += idf(term) * tf * (kK1 + 1.0) / (tf + norm);
  }
  return s;
}

std::vector<std::pair<std::size_t, double>> Bm25Index::rank(std::span<const std::string> query,
                                                            std::size_t top_k) const {
  std::vector<double> scores(size(), 0.0);
  for (const auto& term : query) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const auto& p : it->second) {
      const double tf = static_cast<double>(p.tf);
      const double norm = kK1 * (1.0 - kB + kB * static_cast<double>(lengths_[p.doc]) / average_length_);
      scores[p.doc] += w * tf * (kK1 + 1.0) / (tf + norm);
    }
  }
  std::vector<std::pair<std::size_t, double>> ranked(size());
  for (std::size_t d = 0; d < size(); ++d) ranked[d] = {d, scores[d]};
  auto better = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  const std::size_t keep = top_k == 0 ? ranked.size() : std::min(top_k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(), better);
  ranked.resize(keep);
  return ranked;
}

ModelTitleGenerator::ModelTitleGenerator(const Transformer& model, const Vocabulary& vocab, BeamConfig beam)
    : model_(model), vocab_(vocab), beam_(beam) {}

std::string ModelTitleGenerator::generate(const PostTriplet& post, InputMode mode) const {
  auto input = model_input_for(vocab_, post, mode, model_.config().max_encoder_len);
  auto hyps = beam_search(model_, input, beam_);
  return hyps.empty() ? std::string{} : hypothesis_text(vocab_, hyps.front());
}

std::string Bm25TitleGenerator::generate(const PostTriplet& post, InputMode mode) const {
  std::string text;
  if (mode != InputMode::CodeOnly) text += post.description;
  text += ' ';
  if (mode != InputMode::DescOnly) text += post.code;
  auto ranked = index_.rank(eval_tokenize(text), 1);
  return index_.title(ranked.front().first);
}

EvaluationReport evaluate(const TitleGenerator& generator, std::span<const LanguageTestSet> test_sets, InputMode mode) {
  if (test_sets.empty()) throw Error(Errc::EmptyTestSet, "no test sets");
  EvaluationReport report{generator.name(), mode, {}};
  for (const auto& set : test_sets) {
    if (set.posts.empty())
      throw Error(Errc::EmptyTestSet, "empty test split for " + std::string(language_id(set.language)));
    std::vector<std::string> candidates, references;
    candidates.reserve(set.posts.size());
    references.reserve(set.posts.size());
    for (const auto& post : set.posts) {
      candidates.push_back(generator.generate(post, mode));
      references.push_back(post.title);
    }
    report.languages.push_back({set.language, set.posts.size(), corpus_rouge(candidates, references)});
    spdlog::info("{} {}: Rouge-L F1 {:.3f} over {} posts", generator.name(), language_id(set.language),
                 100.0 * report.languages.back().scores.rougeL.f1, set.posts.size());
  }
  return report;
}

std::string report_jsonl(const EvaluationReport& report) {
  auto pct = [](double v) { return std::round(v * 100000.0) / 1000.0; };
  auto component = [&](const RougeComponent& c) {
    nlohmann::ordered_json j;
    j["precision"] = pct(c.precision);
    j["recall"] = pct(c.recall);
    j["f1"] = pct(c.f1);
    return j;
  };
  std::string out;
  for (const auto& lang : report.languages) {
    nlohmann::ordered_json j;
    j["language"] = std::string(language_id(lang.language));
    j["system"] = report.system;
    j["input_mode"] = std::string(input_mode_name(report.input_mode));
    j["count"] = lang.count;
    j["rouge1"] = component(lang.scores.rouge1);
    j["rouge2"] = component(lang.scores.rouge2);
    j["rougeL"] = component(lang.scores.rougeL);
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace title_forge
