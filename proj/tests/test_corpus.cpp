#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "support.hpp"
#include "title_forge/error.hpp"
#include "title_forge/html.hpp"

using namespace title_forge;

namespace {

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RawPost question(std::int64_t id, std::int64_t score, std::optional<std::int64_t> accepted, std::string body,
                 std::vector<std::string> tags = {"java"}) {
  RawPost p;
  p.id = id;
  p.post_type = PostType::Question;
  p.score = score;
  p.accepted_answer_id = accepted;
  p.tags = std::move(tags);
  p.title = "Title " + std::to_string(id);
  p.body_html = std::move(body);
  return p;
}

const std::string kCodeBody = "<p>Why NPE?</p><pre><code>int x;</code></pre>";

std::string row(int id, int type, int score, const std::string& extra = "") {
  return "<row Id=\"" + std::to_string(id) + "\" PostTypeId=\"" + std::to_string(type) + "\" Score=\"" +
         std::to_string(score) + "\" AcceptedAnswerId=\"9\" Title=\"t" + std::to_string(id) +
         "\" Tags=\"&lt;java&gt;\" Body=\"&lt;p&gt;d&lt;/p&gt;\"" + extra + " />\n";
}

}  // namespace

TEST_SUITE("html") {
  TEST_CASE("entities decode to UTF-8") {
    CHECK(html::decode_entities("a &amp; b &lt;c&gt; &quot;q&quot; &apos;s&apos;") == "a & b <c> \"q\" 's'");
    CHECK(html::decode_entities("caf&#233; &#x263A;") == "caf\xC3\xA9 \xE2\x98\xBA");
    CHECK(html::decode_entities("&nbsp;&bogus;") == "&nbsp;&bogus;");
  }

  TEST_CASE("whitespace collapses and trims") {
    CHECK(html::collapse_whitespace("  a \n\t b  ") == "a b");
    CHECK(html::collapse_whitespace(" \n ").empty());
  }

  TEST_CASE("body segmentation keeps inline code in the prose") {
    auto seg = html::segment_body("<p>Use <code>len(x)</code> here</p><pre><code>print(1)\n</code></pre><p>done</p>");
    REQUIRE(seg.code_blocks.size() == 1);
    CHECK(seg.code_blocks[0] == "print(1)");
    CHECK(seg.description == "Use len(x) here done");
  }

  TEST_CASE("code block attributes and nested highlighting tags") {
    auto seg = html::segment_body("<PRE class=\"x\"><CODE><span>a</span> &lt; b</CODE></PRE>");
    REQUIRE(seg.code_blocks.size() == 1);
    CHECK(seg.code_blocks[0] == "a < b");
    CHECK(seg.description.empty());
  }
}

TEST_SUITE("corpus") {
  TEST_CASE("tags in both dump formats") {
    CHECK(parse_tags("<java><Spring-Boot>") == std::vector<std::string>{"java", "spring-boot"});
    CHECK(parse_tags("|python|pandas|") == std::vector<std::string>{"python", "pandas"});
    CHECK(parse_tags("").empty());
  }

  TEST_CASE("quality rules at each boundary") {
    CHECK(passes_quality_rules(question(1, 5, 7, kCodeBody)));
    CHECK_FALSE(passes_quality_rules(question(1, 4, 7, kCodeBody)));
    CHECK_FALSE(passes_quality_rules(question(1, 9, std::nullopt, kCodeBody)));
    CHECK_FALSE(passes_quality_rules(question(1, 9, 7, "<p>no code, only <code>inline</code></p>")));
    CHECK_FALSE(passes_quality_rules(question(1, 9, 7, "<p>empty</p><pre><code>  </code></pre>")));
  }

  TEST_CASE("triplet extraction") {
    auto t = extract_triplet(question(3, 5, 7, kCodeBody), Language::Java);
    CHECK(t.description == "Why NPE?");
    CHECK(t.code == "int x;");
    CHECK(t.title == "Title 3");
    CHECK(t.post_id == 3);

    auto two = extract_triplet(
        question(4, 5, 7, "<p>x</p><pre><code>a=1</code></pre><pre><code>b=2</code></pre>"), Language::Python);
    CHECK(two.code == "a=1\nb=2");

    try {
      extract_triplet(question(5, 5, 7, "<pre><code>a=1</code></pre>"), Language::Python);
      FAIL("expected EmptyDescription");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyDescription);
    }
    try {
      extract_triplet(question(6, 5, 7, "<p>prose</p>"), Language::Python);
      FAIL("expected NoCode");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NoCode);
    }
  }

  TEST_CASE("extraction is idempotent through rendered HTML") {
    for (const auto& post : support::sample_posts()) {
      RawPost raw = question(post.post_id, 10, 1, html::render_body(post.description, post.code));
      raw.title = post.title;
      auto once = extract_triplet(raw, post.language);
      raw.body_html = html::render_body(once.description, once.code);
      auto twice = extract_triplet(raw, post.language);
      CHECK(once == twice);
    }
  }

  TEST_CASE("multi-language posts go to every matching corpus") {
    auto p = question(1, 5, 7, kCodeBody, {"javascript", "ruby", "java", "c#"});
    CHECK(languages_for(p) == std::vector<Language>{Language::Java, Language::CSharp, Language::JavaScript});
  }

  TEST_CASE("dump reader yields only questions and counts skipped rows") {
    std::string xml = "<?xml version=\"1.0\"?>\n<posts>\n" + row(1, 1, 7) + row(2, 2, 3) + row(3, 1, 1) +
                      "<row Id=\"4\" PostTypeId=\"1\" Title=\"no score\" Tags=\"&lt;a&gt;\" Body=\"b\" />\n" +
                      "<row PostTypeId=\"1\" Score=\"3\" />\n" + "</posts>\n";
    DumpStats stats;
    auto posts = parse_dump(xml, &stats);
    REQUIRE(posts.size() == 2);
    CHECK(posts[0].id == 1);
    CHECK(posts[0].score == 7);
    CHECK(posts[0].accepted_answer_id == 9);
    CHECK(posts[0].tags == std::vector<std::string>{"java"});
    CHECK(posts[0].body_html == "<p>d</p>");
    CHECK(posts[1].id == 3);
    CHECK(stats.rows == 5);
    CHECK(stats.questions == 2);
    CHECK(stats.non_questions == 1);
    CHECK(stats.skipped == 2);
  }

  TEST_CASE("truncated dump reports the byte offset") {
    std::string xml = "<posts>\n" + row(1, 1, 7) + "<row Id=\"2\" PostTypeId=\"1\" Sco";
    try {
      parse_dump(xml);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.code() == Errc::ParseError);
      CHECK(e.offset() > 0);
      CHECK(e.offset() <= xml.size());
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
  }

  TEST_CASE("streaming reader matches a whole-file parse for any chunk size") {
    std::mt19937_64 rng(11);
    std::string xml = "<posts>\n";
    std::size_t expected_questions = 0;
    for (int i = 1; i <= 300; ++i) {
      int type = static_cast<int>(rng() % 3) + 1;
      if (type == 1) ++expected_questions;
      xml += row(i, type, static_cast<int>(rng() % 20));
    }
    xml += "</posts>\n";
    auto whole = parse_dump(xml);
    CHECK(whole.size() == expected_questions);
    for (std::size_t chunk : {1u, 7u, 64u, 4096u}) {
      std::istringstream in(xml);
      DumpReader reader(in, chunk);
      std::vector<std::int64_t> ids;
      while (auto p = reader.next()) ids.push_back(p->id);
      REQUIRE(ids.size() == whole.size());
      for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i] == whole[i].id);
      CHECK(reader.stats().rows == 300);
    }
  }

  TEST_CASE("split partitions deterministically") {
    std::vector<PostTriplet> items;
    for (int i = 0; i < 10; ++i) items.push_back(support::synthetic_post(Language::Java, static_cast<std::size_t>(i)));
    auto a = split_corpus(items, 42, 6, 2);
    CHECK(a.train.size() == 6);
    CHECK(a.test.size() == 2);
    CHECK(a.validation.size() == 2);
    std::set<std::int64_t> ids;
    for (const auto* part : {&a.train, &a.test, &a.validation})
      for (const auto& t : *part) ids.insert(t.post_id);
    CHECK(ids.size() == 10);

    std::reverse(items.begin(), items.end());
    auto b = split_corpus(items, 42, 6, 2);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.validation == b.validation);

    auto c = split_corpus(items, 43, 6, 2);
    CHECK_FALSE(a.train == c.train);

    CHECK_THROWS_AS(split_corpus(items, 1, 9, 2), Error);
  }

  TEST_CASE("split sizes at corpus scale") {
    std::vector<PostTriplet> items(68959);
    for (std::size_t i = 0; i < items.size(); ++i) items[i].post_id = static_cast<std::int64_t>(i + 1);
    auto s = split_corpus(std::move(items), 0, 60000, 5000);
    CHECK(s.validation.size() == 3959);
  }

  TEST_CASE("length statistics") {
    PostTriplet t;
    t.title = "one two three four";
    t.description = "d";
    t.code = "c";
    auto s = corpus_stats(std::span(&t, 1));
    CHECK(s.title.average == doctest::Approx(4.0));
    CHECK(s.title.mode == 4);
    CHECK(s.title.median == doctest::Approx(4.0));
    CHECK(s.title.fraction_below == doctest::Approx(1.0));
    CHECK(s.title.cutoff == 16);
    CHECK(s.code.cutoff == 256);

    std::vector<PostTriplet> many(4);
    const char* titles[] = {"a", "a b", "a b", "a b c d e"};
    for (int i = 0; i < 4; ++i) many[static_cast<std::size_t>(i)].title = titles[i];
    auto m = corpus_stats(many);
    CHECK(m.title.average == doctest::Approx(2.5));
    CHECK(m.title.mode == 2);
    CHECK(m.title.median == doctest::Approx(2.0));

    std::vector<PostTriplet> none;
    CHECK_THROWS_AS(corpus_stats(none), Error);
  }

  TEST_CASE("record lines never span lines and round-trip") {
    auto posts = support::sample_posts();
    REQUIRE(posts.size() >= 20);
    auto dir = support::scratch_dir("records");
    write_triplets(dir / "x.jsonl", posts);
    auto text = read_all(dir / "x.jsonl");
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == posts.size());
    CHECK(read_triplets(dir / "x.jsonl") == posts);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("build_corpus end to end on the rules fixture") {
    auto dir = support::scratch_dir("build");
    CorpusBuildOptions opts;
    opts.dump = support::fixture("posts_rules.xml");
    opts.out_dir = dir;
    opts.train_n = 1;
    opts.test_n = 0;
    opts.languages = {Language::Java};
    auto report = build_corpus(opts);
    CHECK(report.dump.rows == 12);
    CHECK(report.kept[task_index(Language::Java)] == 2);
    CHECK(report.train[task_index(Language::Java)] == 1);
    CHECK(report.validation[task_index(Language::Java)] == 1);
    auto train = read_triplets(split_path(dir, Language::Java, SplitName::Train));
    auto val = read_triplets(split_path(dir, Language::Java, SplitName::Validation));
    std::set<std::int64_t> ids{train.at(0).post_id, val.at(0).post_id};
    CHECK(ids == std::set<std::int64_t>{1, 7});
    std::filesystem::remove_all(dir);
  }
}
