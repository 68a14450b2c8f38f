#include <doctest.h>

#include <cmath>

#include "skillmap/extraction.hpp"
#include "skillmap/util.hpp"
#include "test_support.hpp"

using namespace skillmap;

namespace {

EncoderModel tiny_model() {
  EncoderModel m;
  m.vocab = Vocabulary::build({"know sql. use python daily. we offer lunch."});
  EncoderDims d;
  d.vocab = m.vocab.size();
  d.input = d.hidden = d.attention = 6;
  d.output = 10;
  m.params = EncoderParams::random(d, 8, 0.5);
  m.max_len = 32;
  return m;
}

Prescreener constant_prescreener(std::size_t dim, double bias) {
  Prescreener p;
  p.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  p.bias = bias;
  return p;
}

PostingSkills posting(const std::string& id, SkillSet skills, SkillSet aligned, SkillSet nonaligned) {
  PostingSkills p;
  p.posting_id = id;
  p.firm_id = "F1";
  p.occ_id = "O1";
  p.year = 2020;
  p.skills = std::move(skills);
  p.aligned = std::move(aligned);
  p.nonaligned = std::move(nonaligned);
  return p;
}

}  // namespace

TEST_CASE("per-sentence cap keeps the best five") {
  const std::size_t n = 7;
  std::vector<Embedding> vecs;
  std::vector<std::string> ids;
  Embedding q = Embedding::Zero(8);
  q(0) = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    Embedding v = Embedding::Zero(8);
    v(0) = 1.0;
    v(1 + i) = 0.1 * static_cast<double>(i + 1);
    vecs.push_back(v);
    ids.push_back("S" + std::to_string(i));
  }
  const auto index = SkillIndex::build(ids, vecs);
  const auto hits = match_sentence(q, index, 0.6, 5);
  REQUIRE(hits.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) CHECK(hits[k].index == k);
}

TEST_CASE("extraction end to end on a tiny model") {
  const auto model = tiny_model();
  const std::vector<std::string> labels = {"Know SQL.", "Use python daily."};
  const auto index = SkillIndex::build({"S1", "S2"}, model.embed_all(labels));
  const std::size_t dim = 2 * model.params.dims().hidden;
  JobPosting p{"p1", "F1", 2020, "Analyst", "Know SQL. Use python daily. Know SQL."};

  SUBCASE("every sentence rejected gives an empty set") {
    const auto r = extract_skills(p, constant_prescreener(dim, -50.0), model, index);
    CHECK(r.skills.empty());
    CHECK(r.kept_sentences.empty());
    CHECK(r.sentences == 3);
  }
  SUBCASE("a skill matched twice is kept once with both sources") {
    ExtractionConfig cfg;
    cfg.tau = 0.999999;
    const auto r = extract_skills(p, constant_prescreener(dim, 50.0), model, index, cfg);
    CHECK(r.skills == SkillSet{"S1", "S2"});
    CHECK(r.sources.at("S1") == std::vector<std::size_t>{0, 2});
    CHECK(r.sources.at("S2") == std::vector<std::size_t>{1});
    CHECK(std::abs(r.document.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("alignment partitions") {
  auto a = classify_alignment({"a", "x"}, {"a", "b"});
  CHECK(a.aligned == SkillSet{"a"});
  CHECK(a.nonaligned == SkillSet{"x"});
  CHECK(classify_alignment({"a"}, {"a", "b"}).nonaligned.empty());
  const auto e = classify_alignment({}, {"a"});
  CHECK(e.aligned.empty());
  CHECK(e.nonaligned.empty());

  BaselineSkillMap base{"2018", 0.6, {{"O1", {"a"}}}};
  auto p = posting("p", {"a", "z"}, {}, {});
  classify_posting(p, base);
  CHECK(p.aligned == SkillSet{"a"});
  CHECK(!p.error);
  p.occ_id = "O9";
  classify_posting(p, base);
  CHECK(p.error);
  CHECK(p.aligned.empty());
}

TEST_CASE("AI stock recurrence") {
  const auto s = ai_stock(std::map<int, double>{{2019, 10.0}, {2020, 20.0}}, 0.15);
  CHECK(s.at(2019) == 10.0);
  CHECK(s.at(2020) == doctest::Approx(28.5).epsilon(1e-15));
  for (const auto& [y, v] : ai_stock(std::map<int, double>{{1, 0.0}, {2, 0.0}}, 0.2)) CHECK(v == 0.0);
  const auto gap = ai_stock(std::map<int, double>{{2018, 10.0}, {2020, 0.0}}, 0.5);
  CHECK(gap.at(2020) == 2.5);
  CHECK_THROWS_AS(ai_stock(std::map<int, double>{{1, 1.0}}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ai_stock(std::map<int, double>{{1, -1.0}}, 0.15), std::invalid_argument);
  // Linear in flows.
  const auto twice = ai_stock(std::map<int, double>{{2019, 20.0}, {2020, 40.0}}, 0.15);
  CHECK(twice.at(2020) == doctest::Approx(2.0 * s.at(2020)).epsilon(1e-15));
}

TEST_CASE("text consistency") {
  Embedding a(2), b(2), c(2);
  a << 1, 0;
  CHECK(text_consistency({a, a}) == 1.0);
  CHECK(!text_consistency({a}));
  // Pairwise cosines 0.5, 0.5 and 1.0 when b = c at 60 degrees from a.
  b << 0.5, std::sqrt(0.75);
  c = b;
  CHECK(*text_consistency({a, b, c}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("forward-looking measures") {
  const SkillSet f = {"c"};
  auto p1 = posting("p1", {"c"}, {}, {"c"});
  auto p2 = posting("p2", {"c", "d"}, {}, {"c", "d"});
  const auto m = forward_measures({&p1, &p2}, f);
  CHECK(m.count == 2);
  CHECK(m.share == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.intensity == 1.0);

  const auto none = forward_measures({&p1, &p2}, {});
  CHECK(none.count == 0);
  CHECK(none.share == 0.0);
  CHECK(none.intensity == 0.0);

  auto single = posting("p3", {"a", "c"}, {"a"}, {"c", "e"});
  const auto s = forward_measures({&single}, f);
  CHECK(s.count == 1);
  CHECK(s.share == 0.5);
  CHECK(s.intensity == 1.0);

  auto mentions = posting("p4", {"c"}, {}, {"c"});
  mentions.sources["c"] = {0, 3};
  CHECK(forward_measures({&mentions}, f, IntensityMode::mentions).intensity == 2.0);
  CHECK(forward_measures({&mentions}, f, IntensityMode::sets).intensity == 1.0);

  auto empty = posting("p5", {}, {}, {});
  CHECK(forward_measures({&empty}, f).share == 0.0);
}

TEST_CASE("panel aggregation") {
  std::vector<PostingSkills> ps = {posting("p1", {"a", "b", "x"}, {"a", "b"}, {"x"}),
                                   posting("p2", {"a", "b", "c"}, {"a", "b", "c"}, {}),
                                   posting("p3", {"z"}, {}, {"z"})};
  ps[2].occ_id = "O2";
  Embedding d(2);
  d << 0.6, 0.8;
  for (auto& p : ps) p.document = d;
  ps[0].kept_sentences = {"Familiar with SQL."};
  auto broken = posting("p4", {"q"}, {}, {});
  broken.error = "no baseline";
  ps.push_back(broken);

  const std::map<std::string, SkillSet> forward = {{"O1", {"x"}}};
  const std::map<FirmYear, double> stocks = {{{"F1", 2020}, 4.5}};
  const auto lex = default_lexicon();
  PanelInputs in;
  in.forward = &forward;
  in.stocks = &stocks;
  in.lexicon = &lex;
  const auto cells = aggregate_panel(ps, in);
  REQUIRE(cells.size() == 2);
  const auto& c = cells[0];
  CHECK(c.occ_id == "O1");
  CHECK(c.postings == 2);
  CHECK(c.aligned == 5);
  CHECK(c.nonaligned == 1);
  CHECK(c.aligned + c.nonaligned == ps[0].skills.size() + ps[1].skills.size());
  CHECK(c.fl_count == 1);
  CHECK(c.consistency == 1.0);
  CHECK(c.ambig_freq == 1);
  CHECK(c.ai_stock == 4.5);
  CHECK(!cells[1].consistency);

  skillmap::testing::TempDir dir("panel");
  write_panel(dir / "panel.tsv", cells);
  const auto back = read_panel(dir / "panel.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].aligned == 5);
  CHECK(back[0].consistency == 1.0);
  CHECK(!back[1].consistency);
  CHECK(!back[0].controls);
}
