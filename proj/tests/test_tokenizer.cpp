#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "support.hpp"
#include "title_forge/error.hpp"

using namespace title_forge;

namespace {

const Vocabulary& sample_vocab() {
  static const Vocabulary vocab = [] {
    auto posts = support::sample_posts();
    return train_vocabulary(support::vocabulary_texts(posts), 700);
  }();
  return vocab;
}

std::size_t count_of(const std::vector<TokenId>& ids, TokenId id) {
  return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), id));
}

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("base vocabulary layout") {
    Vocabulary v;
    CHECK(v.size() == 261);
    CHECK(v.pieces()[special::kCodeSep] == "<code>");
    CHECK(v.pieces()[special::kByteBase + 'a'] == "a");
    CHECK(v.encode("ab") == std::vector<TokenId>{special::kByteBase + 'a', special::kByteBase + 'b'});
    CHECK(v.encode("").empty());
  }

  TEST_CASE("pretokenizer pieces concatenate back to the input") {
    std::string text = "int x = foo(bar);\n\tif  (x>0) return \xC3\xA9t\xC3\xA9;";
    auto pieces = pretokenize(text);
    std::string joined;
    for (auto p : pieces) joined += p;
    CHECK(joined == text);
    CHECK(std::find(pieces.begin(), pieces.end(), " x") != pieces.end());
    CHECK(std::find(pieces.begin(), pieces.end(), " \xC3\xA9t\xC3\xA9") != pieces.end());
  }

  TEST_CASE("first merge follows the most frequent pair") {
    std::vector<std::string> texts{"aaab", "aaab"};
    auto v = train_vocabulary(texts, 262);
    REQUIRE(v.merges().size() == 1);
    CHECK(v.merges()[0] == Vocabulary::Merge{special::kByteBase + 'a', special::kByteBase + 'a'});
    CHECK(v.pieces().back() == "aa");
  }

  TEST_CASE("ties break toward the lexicographically smaller merged string") {
    // "ab" and "cd" both occur twice; "ab" < "cd".
    std::vector<std::string> texts{"cd ab", "ab cd"};
    auto v = train_vocabulary(texts, 262);
    CHECK(v.pieces().back() == "ab");
  }

  TEST_CASE("training preconditions") {
    std::vector<std::string> texts{"x"};
    try {
      train_vocabulary(texts, 200);
      FAIL("expected TargetTooSmall");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TargetTooSmall);
    }
    std::vector<std::string> empty;
    try {
      train_vocabulary(empty, 300);
      FAIL("expected EmptyCorpus");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyCorpus);
    }
  }

  TEST_CASE("training is deterministic and reaches the target when pairs remain") {
    auto posts = support::sample_posts();
    auto texts = support::vocabulary_texts(posts);
    auto a = train_vocabulary(texts, 500);
    auto b = train_vocabulary(texts, 500);
    CHECK(a == b);
    CHECK(a.size() == 500);
  }

  TEST_CASE("learned pieces never collide with reserved ids") {
    const auto& v = sample_vocab();
    for (const auto& p : support::sample_posts()) {
      for (auto id : v.encode(p.description + p.code + p.title)) CHECK(id >= special::kCount);
    }
  }

  TEST_CASE("roundtrip and length bound") {
    const auto& v = sample_vocab();
    for (const auto& p : support::sample_posts()) {
      for (const auto* field : {&p.description, &p.code, &p.title}) {
        auto ids = v.encode(*field);
        CHECK(v.decode(ids) == *field);
        CHECK(ids.size() <= field->size());
      }
    }
    std::string odd("\x00\xff\xfe raw \x80", 9);
    CHECK(v.decode(v.encode(odd)) == odd);
    CHECK(v.decode(v.encode("int x = 0;")) == "int x = 0;");
  }

  TEST_CASE("decode drops control ids and rejects unknown ids") {
    const auto& v = sample_vocab();
    std::vector<TokenId> ids{special::kBos, special::kEos};
    CHECK(v.decode(ids).empty());
    std::vector<TokenId> sep{special::kCodeSep};
    CHECK(v.decode(sep) == "<code>");
    std::vector<TokenId> bad{1000000000};
    try {
      v.decode(bad);
      FAIL("expected UnknownId");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::UnknownId);
    }
  }

  TEST_CASE("vocabulary file round-trips to identical encoding") {
    const auto& v = sample_vocab();
    std::stringstream buffer;
    v.write(buffer);
    auto loaded = Vocabulary::read(buffer);
    CHECK(loaded == v);
    for (const auto& p : support::sample_posts()) CHECK(loaded.encode(p.code) == v.encode(p.code));
  }

  TEST_CASE("corrupt vocabulary files are rejected") {
    const auto& v = sample_vocab();
    std::stringstream buffer;
    v.write(buffer);
    auto text = buffer.str();
    auto pos = text.find("%%merges");
    REQUIRE(pos != std::string::npos);
    std::istringstream truncated(text.substr(0, pos));
    CHECK_THROWS_AS(Vocabulary::read(truncated), Error);
    std::istringstream garbage("not a vocabulary\n");
    CHECK_THROWS_AS(Vocabulary::read(garbage), Error);
  }

  TEST_CASE("model input structure") {
    const auto& v = sample_vocab();
    auto prefix = v.encode("JS: ");
    auto in = build_model_input(v, Language::JavaScript, "Why NaN?", "parseInt(x)");
    REQUIRE(in.token_ids.size() > prefix.size());
    CHECK(std::equal(prefix.begin(), prefix.end(), in.token_ids.begin()));
    CHECK(count_of(in.token_ids, special::kCodeSep) == 1);
    CHECK(in.task == Language::JavaScript);
    CHECK(v.decode(in.token_ids) == "JS: Why NaN?<code>parseInt(x)");

    auto no_code = build_model_input(v, Language::Python, "just prose", "");
    CHECK(no_code.token_ids.back() == special::kCodeSep);

    auto no_desc = build_model_input(v, Language::Java, "", "int x;");
    auto java = v.encode("Java: ");
    CHECK(no_desc.token_ids[java.size()] == special::kCodeSep);

    try {
      build_model_input(v, Language::Java, "", "");
      FAIL("expected EmptyInput");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyInput);
    }
  }

  TEST_CASE("over-long input truncates code first, then description") {
    Vocabulary base;  // one id per byte makes token counts exact
    std::string desc(600, 'd'), code(600, 'c');
    auto in = build_model_input(base, Language::CSharp, desc, code, 512);
    CHECK(in.token_ids.size() == 512);
    CHECK(count_of(in.token_ids, special::kCodeSep) == 1);
    CHECK(count_of(in.token_ids, special::kByteBase + 'c') == 0);
    CHECK(in.token_ids.back() == special::kCodeSep);

    auto mid = build_model_input(base, Language::CSharp, std::string(100, 'd'), code, 512);
    CHECK(mid.token_ids.size() == 512);
    CHECK(count_of(mid.token_ids, special::kByteBase + 'd') == 100);
    CHECK(count_of(mid.token_ids, special::kCodeSep) == 1);
  }

  TEST_CASE("random strings over fixture characters round-trip") {
    const auto& v = sample_vocab();
    auto posts = support::sample_posts();
    std::string pool;
    for (const auto& p : posts) pool += p.description + p.code + p.title;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 500; ++i) {
      std::size_t a = rng() % pool.size(), len = rng() % 80;
      auto s = pool.substr(a, len);
      CHECK(v.decode(v.encode(s)) == s);
    }
  }
}
