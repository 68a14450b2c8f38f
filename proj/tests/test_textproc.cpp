#include <doctest.h>

#include "skillmap/textproc.hpp"
#include "skillmap/util.hpp"
#include "test_support.hpp"

using namespace skillmap;

namespace {

std::vector<std::string> texts(const std::vector<SentenceRecord>& s) {
  std::vector<std::string> out;
  for (const auto& r : s) out.push_back(r.text);
  return out;
}

}  // namespace

TEST_CASE("segmentation at terminal marks") {
  CHECK(texts(segment_text("p", "A. B! C?")) == std::vector<std::string>{"A.", "B!", "C?"});
  CHECK(texts(segment_text("p", "no terminal punctuation here")) ==
        std::vector<std::string>{"no terminal punctuation here"});
  CHECK(texts(segment_text("p", "要求：熟悉Python；良好沟通能力。")) ==
        std::vector<std::string>{"要求：熟悉Python；", "良好沟通能力。"});
  CHECK(segment_text("p", "   ").empty());
}

TEST_CASE("segmentation keeps indices and byte spans") {
  const std::string body = "Know SQL.\n- Use R daily.";
  const auto s = segment_text("p7", body);
  REQUIRE(s.size() == 2);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].posting_id == "p7");
    CHECK(s[i].index == i);
    CHECK(body.substr(s[i].begin, s[i].end - s[i].begin).find(s[i].text) != std::string::npos);
  }
}

TEST_CASE("short fragments without a terminal mark fold into the previous sentence") {
  const auto s = segment_text("p", "Strong SQL skills.\nok\nNext line.");
  REQUIRE(s.size() == 2);
  CHECK(s[0].text.find("ok") != std::string::npos);
}

TEST_CASE("learned boundary scorer replaces the punctuation rules") {
  const std::vector<std::string> sentences = {"Know SQL well.", "Use R daily!", "Can you lead a team?",
                                              "We offer lunch.", "Python is required."};
  auto samples = BoundaryScorer::synthesize(sentences, 60, 3);
  BoundaryScorer scorer;
  scorer.train(samples, 200, 0.5);
  SegmentationConfig config;
  config.scorer = scorer.as_function();
  const auto s = segment_text("p", "Know SQL well. Use R daily! We offer lunch.", config);
  CHECK(s.size() == 3);
}

TEST_CASE("ambiguity scan") {
  SUBCASE("one matching sentence of two") {
    const AmbiguityLexicon lex({"familiar with"});
    const auto r = scan_ambiguity({"Familiar with SQL", "Expert in SQL"}, lex);
    CHECK(r.frequency == 1);
    CHECK(r.share == 0.5);
  }
  SUBCASE("no sentences") {
    const auto r = scan_ambiguity({}, default_lexicon());
    CHECK(r.frequency == 0);
    CHECK(r.share == 0.0);
  }
  SUBCASE("every occurrence counts") {
    const AmbiguityLexicon lex({"familiar with"});
    const auto r = scan_ambiguity({"familiar with X and familiar with Y"}, lex);
    CHECK(r.frequency == 2);
    CHECK(r.share == 1.0);
  }
  SUBCASE("whitespace and case are normalized") {
    const AmbiguityLexicon lex({"Familiar  With"});
    CHECK(scan_ambiguity({"FAMILIAR\twith sql"}, lex).frequency == 1);
  }
  CHECK_THROWS(AmbiguityLexicon({}));
  CHECK_THROWS(AmbiguityLexicon({"a b", "A  b"}));
}

TEST_CASE("lexicon file extends the defaults") {
  skillmap::testing::TempDir dir("lexicon");
  write_file(dir / "lex.txt", "nice to have\n\n");
  const auto lex = load_lexicon(dir / "lex.txt");
  CHECK(lex.phrases().size() == default_lexicon().phrases().size() + 1);
}
