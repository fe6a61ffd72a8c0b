#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "title_forge/error.hpp"

using namespace title_forge;

namespace {

using Words = std::vector<std::string>;

void check_same(const RougeComponent& a, const RougeComponent& b) {
  CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-15));
  CHECK(a.recall == doctest::Approx(b.recall).epsilon(1e-15));
  CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-15));
}

// Returns the stored title of any post it has seen; used as a perfect memoriser.
class LookupGenerator final : public TitleGenerator {
 public:
  explicit LookupGenerator(std::span<const PostTriplet> posts) {
    for (const auto& p : posts) titles_[p.post_id] = p.title;
  }
  std::string name() const override { return "lookup"; }
  std::string generate(const PostTriplet& post, InputMode) const override { return titles_.at(post.post_id); }

 private:
  std::map<std::int64_t, std::string> titles_;
};

// Records the mode it was asked for.
class ModeProbe final : public TitleGenerator {
 public:
  mutable std::vector<InputMode> seen;
  std::string name() const override { return "probe"; }
  std::string generate(const PostTriplet&, InputMode mode) const override {
    seen.push_back(mode);
    return "x";
  }
};

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("evaluation tokenization") {
    CHECK(eval_tokenize("How to Sort a List<String> in Java?") == Words{"how", "to", "sort", "a", "list", "string", "in", "java"});
    CHECK(eval_tokenize("  --  ").empty());
    CHECK(eval_tokenize("caf\xC3\xA9-au-lait") == Words{"caf\xC3\xA9", "au", "lait"});
    CHECK(eval_tokenize("C# 10") == Words{"c", "10"});
  }

  TEST_CASE("rouge on worked examples") {
    Words cand{"the", "cat", "sat"}, ref{"the", "cat"};
    auto r1 = rouge_n(cand, ref, 1);
    CHECK(r1.precision == doctest::Approx(2.0 / 3));
    CHECK(r1.recall == doctest::Approx(1.0));
    CHECK(r1.f1 == doctest::Approx(0.8));

    Words abc{"a", "b", "c"}, acd{"a", "c", "d"};
    auto l = rouge_l(abc, acd);
    CHECK(l.precision == doctest::Approx(2.0 / 3));
    CHECK(l.recall == doctest::Approx(2.0 / 3));
    CHECK(l.f1 == doctest::Approx(2.0 / 3));
    CHECK(rouge_n(abc, acd, 2).f1 == 0.0);

    auto same = rouge("Parse JSON in Python", "parse json in python");
    CHECK(same.rouge1.f1 == 1.0);
    CHECK(same.rouge2.f1 == 1.0);
    CHECK(same.rougeL.f1 == 1.0);

    auto empty = rouge("", "something");
    CHECK(empty.rouge1.f1 == 0.0);
    CHECK(empty.rougeL.precision == 0.0);
    CHECK(rouge("single", "single").rouge2.f1 == 0.0);  // no bigrams on either side
  }

  TEST_CASE("overlap is clipped by the rarer side") {
    Words cand{"a", "a", "a", "a"}, ref{"a", "b"};
    auto r = rouge_n(cand, ref, 1);
    CHECK(r.precision == doctest::Approx(0.25));
    CHECK(r.recall == doctest::Approx(0.5));
  }

  TEST_CASE("rouge matches brute-force oracles on random pairs") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 500; ++i) {
      auto cand = support::random_words(rng, 12, 6);
      auto ref = support::random_words(rng, 12, 6);
      check_same(rouge_n(cand, ref, 1), support::oracle_rouge_n(cand, ref, 1));
      check_same(rouge_n(cand, ref, 2), support::oracle_rouge_n(cand, ref, 2));
      check_same(rouge_l(cand, ref), support::oracle_rouge_l(cand, ref));
      for (const auto& c : {rouge_n(cand, ref, 1), rouge_n(cand, ref, 2), rouge_l(cand, ref)}) {
        CHECK(c.precision >= 0.0);
        CHECK(c.precision <= 1.0);
        CHECK(c.recall <= 1.0);
        CHECK(c.f1 <= 1.0);
      }
    }
  }

  TEST_CASE("corpus averaging") {
    std::vector<std::string> one_c{"a b"}, one_r{"a c"};
    auto single = corpus_rouge(one_c, one_r);
    CHECK(single.rouge1.f1 == doctest::Approx(rouge("a b", "a c").rouge1.f1));

    // F1 0.4 and 0.6 for Rouge-1 by construction: P=R for equal lengths.
    std::vector<std::string> c{"a b c d e", "a b c d e"}, r{"a b x y z", "a b c x y"};
    auto avg = corpus_rouge(c, r);
    CHECK(avg.rouge1.f1 == doctest::Approx(0.5));

    std::vector<std::string> three(3, "a"), four(4, "a"), none;
    try {
      corpus_rouge(three, four);
      FAIL("expected LengthMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::LengthMismatch);
    }
    try {
      corpus_rouge(none, none);
      FAIL("expected EmptyList");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyList);
    }
  }

  TEST_CASE("BM25 index statistics") {
    Bm25Index idx({{"a", "b", "c", "d"}, {"a", "e", "e", "f", "g", "h"}}, {"t0", "t1"});
    CHECK(idx.size() == 2);
    CHECK(idx.average_length() == 5.0);
    CHECK(idx.document_frequency("a") == 2);
    CHECK(idx.document_frequency("e") == 1);
    CHECK(idx.document_frequency("zzz") == 0);
    CHECK(idx.term_frequency(1, "e") == 2);
    CHECK(idx.idf("a") == doctest::Approx(std::log((2 - 2 + 0.5) / (2 + 0.5) + 1)));
    CHECK(idx.idf("a") > 0.0);
    CHECK(idx.title(1) == "t1");

    try {
      Bm25Index::build({});
      FAIL("expected EmptyCorpus");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyCorpus);
    }
    CHECK_THROWS_AS(Bm25Index({{"a"}}, {"x", "y"}), Error);
  }

  TEST_CASE("BM25 closed form on a single document") {
    Words doc{"t", "t", "u", "v", "w", "x", "y", "z", "p", "q"};
    Bm25Index idx({doc}, {"only"});
    Words query{"t"};
    const double k1 = 1.2, b = 0.75, tf = 2, len = 10, avg = 10, n = 1, df = 1;
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    const double expected = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg));
    CHECK(idx.score(query, 0) == doctest::Approx(expected).epsilon(1e-14));
  }

  TEST_CASE("BM25 ranking behaviour") {
    Bm25Index idx({{"a", "b"}, {"c", "d"}, {"e", "f"}}, {"t0", "t1", "t2"});
    Words miss{"zzz"};
    auto ranked = idx.rank(miss);
    REQUIRE(ranked.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(ranked[i].first == i);
      CHECK(ranked[i].second == 0.0);
    }
    CHECK(idx.rank(Words{}).front().first == 0);

    Bm25Index tf({{"t", "x", "x", "x"}, {"t", "t", "t", "x"}}, {"low", "high"});
    Words t{"t"};
    CHECK(tf.rank(t).front().first == 1);
    CHECK(tf.rank(t, 1).size() == 1);

    Words twice{"a", "a"}, once{"a"};
    CHECK(idx.score(twice, 0) == doctest::Approx(2 * idx.score(once, 0)));
  }

  TEST_CASE("BM25 matches the naive oracle on random corpora") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 1 + rng() % 50;
      std::vector<Words> docs;
      std::vector<std::string> titles;
      for (std::size_t d = 0; d < n; ++d) {
        auto w = support::random_words(rng, 15, 20);
        if (w.empty()) w.push_back("w0");
        docs.push_back(w);
        titles.push_back("title" + std::to_string(d));
      }
      auto query = support::random_words(rng, 6, 25);
      Bm25Index idx(docs, titles);
      auto want = support::oracle_bm25(docs, query);
      auto order = support::oracle_rank(want);
      auto got = idx.rank(query);
      REQUIRE(got.size() == order.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].first == order[i].first);
        CHECK(std::abs(got[i].second - order[i].second) <= 1e-9);
        CHECK(got[i].second >= 0.0);
      }
    }
  }

  TEST_CASE("BM25 documents join description and code") {
    PostTriplet a = support::synthetic_post(Language::Java, 0), b = support::synthetic_post(Language::Java, 5);
    std::vector<PostTriplet> train{a, b};
    auto idx = Bm25Index::build(train);
    CHECK(idx.length(0) == eval_tokenize(a.description + " " + a.code).size());
    Bm25TitleGenerator gen(idx);
    CHECK(gen.generate(b, InputMode::Both) == b.title);
    CHECK(gen.name() == "bm25");
  }

  TEST_CASE("evaluation report") {
    auto java = support::synthetic_posts(Language::Java, 4);
    auto py = support::synthetic_posts(Language::Python, 3);
    std::vector<PostTriplet> all(java);
    all.insert(all.end(), py.begin(), py.end());
    LookupGenerator perfect(all);
    std::vector<LanguageTestSet> sets{{Language::Java, java}, {Language::Python, py}};
    auto report = evaluate(perfect, sets, InputMode::Both);
    REQUIRE(report.languages.size() == 2);
    CHECK(report.system == "lookup");
    CHECK(report.languages[0].count == 4);
    CHECK(report.languages[0].scores.rougeL.f1 == 1.0);

    std::istringstream lines(report_jsonl(report));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j["rougeL"]["f1"] == 100.0);
      CHECK(j["input_mode"] == "both");
      ++n;
    }
    CHECK(n == 2);

    ModeProbe probe;
    evaluate(probe, sets, InputMode::CodeOnly);
    for (auto m : probe.seen) CHECK(m == InputMode::CodeOnly);

    std::vector<LanguageTestSet> empty{{Language::Java, {}}};
    try {
      evaluate(perfect, empty, InputMode::Both);
      FAIL("expected EmptyTestSet");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyTestSet);
    }
  }

  TEST_CASE("report percentages are rounded to three decimals") {
    EvaluationReport r{"x", InputMode::DescOnly, {}};
    LanguageReport lr;
    lr.language = Language::CSharp;
    lr.count = 3;
    lr.scores.rouge1 = {1.0 / 3, 2.0 / 3, 0.123456789};
    r.languages.push_back(lr);
    auto j = nlohmann::json::parse(report_jsonl(r));
    CHECK(j["language"] == "csharp");
    CHECK(j["rouge1"]["precision"] == 33.333);
    CHECK(j["rouge1"]["recall"] == 66.667);
    CHECK(j["rouge1"]["f1"] == 12.346);
  }
}
