#include <doctest.h>

#include <algorithm>
#include <random>

#include "skillmap/fixture.hpp"
#include "skillmap/taxonomy.hpp"
#include "test_support.hpp"

using namespace skillmap;

namespace {

std::vector<Embedding> random_unit(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < n; ++i) {
    Embedding e(static_cast<Eigen::Index>(dim));
    for (auto& x : e) x = g(rng);
    out.push_back(e.normalized());
  }
  return out;
}

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "L%05zu", i);
    out.push_back(buf);
  }
  return out;
}

EncoderModel small_model() {
  std::vector<std::string> texts;
  for (const auto& s : toy_skills()) texts.push_back(SkillTaxonomy::encoder_text(s));
  EncoderModel m;
  m.vocab = Vocabulary::build(texts);
  EncoderDims d;
  d.vocab = m.vocab.size();
  d.input = d.hidden = d.attention = 8;
  d.output = 16;
  m.params = EncoderParams::random(d, 3);
  m.max_len = 48;
  return m;
}

}  // namespace

TEST_CASE("exact index search") {
  const auto vecs = random_unit(50, 8, 1);
  const auto index = SkillIndex::build(ids(50), vecs);
  for (std::size_t q = 0; q < 50; ++q) {
    const auto hit = index.search(vecs[q], 1);
    REQUIRE(hit.size() == 1);
    CHECK(hit[0].index == q);
    CHECK(hit[0].score == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto top = index.search(vecs[0], 5);
  for (std::size_t i = 1; i < top.size(); ++i) CHECK(top[i - 1].score >= top[i].score);
  CHECK_THROWS(SkillIndex::build({"b", "a"}, random_unit(2, 4, 1)));
}

TEST_CASE("ties go to the lower id") {
  std::vector<Embedding> same(3, random_unit(1, 4, 2)[0]);
  const auto index = SkillIndex::build({"a", "b", "c"}, same);
  const auto hits = index.search(same[0], 3);
  CHECK(hits[0].index == 0);
  CHECK(hits[1].index == 1);
  CHECK(assign_occupation(same[0], index) == "a");
}

TEST_CASE("approximate index agrees with exact and is reproducible") {
  const auto vecs = testing::clustered_labels(2000, 32, 40, 1.0, 4);
  IndexConfig cfg;
  cfg.mode = IndexMode::approximate;
  const auto a = SkillIndex::build(ids(2000), vecs, cfg);
  const auto b = SkillIndex::build(ids(2000), vecs, cfg);
  CHECK(a.assignment() == b.assignment());
  const auto queries = testing::noisy_queries(vecs, 500, 1.0, 5);
  std::size_t agree = 0;
  for (const auto& q : queries) agree += a.search(q, 1)[0].index == a.search_exact(q, 1)[0].index;
  CHECK(agree >= 495);
}

TEST_CASE("task to skill mapping") {
  const auto vecs = random_unit(6, 8, 7);
  const auto index = SkillIndex::build(ids(6), vecs);
  SUBCASE("tau zero keeps every skill when all similarities are non-negative") {
    std::vector<Embedding> pos;
    for (auto v : vecs) pos.push_back(v.cwiseAbs().normalized());
    const auto positive = SkillIndex::build(ids(6), pos);
    const auto s = map_tasks_to_skills({pos[0], pos[3]}, positive, 0.0);
    for (const auto& set : s) CHECK(set.size() == 6);
  }
  SUBCASE("identical text maps with similarity one") {
    const auto s = map_tasks_to_skills({vecs[2]}, index, 0.6);
    CHECK(s[0].count(ids(6)[2]) == 1);
  }
  SUBCASE("a high threshold can leave a task empty") {
    const auto s = map_tasks_to_skills({random_unit(1, 8, 99)[0]}, index, 0.999);
    CHECK(s[0].empty());
  }
  CHECK_THROWS(map_tasks_to_skills({vecs[0]}, index, 1.5));
}

TEST_CASE("tau zero keeps every skill with non-negative similarity") {
  const auto model = small_model();
  const SkillTaxonomy tax("2018", toy_skills());
  const auto index = SkillIndex::build(tax, model);
  Occupation occ{"O1", "Analyst", {"Report findings."}};
  const auto sets = map_tasks_to_skills(occ, index, model, 0.0);
  REQUIRE(sets.size() == 1);
  const auto scores = index.scores(model.embed("Report findings."));
  std::size_t nonneg = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) nonneg += scores(i) >= 0.0;
  CHECK(sets[0].size() == nonneg);
}

TEST_CASE("baseline sets are unions of task sets and shrink with tau") {
  const auto model = small_model();
  const auto fx = make_fixture();
  const SkillTaxonomy tax("2018", fx.skills);
  const OccupationTaxonomy occ("2018", fx.occupations_base);
  const auto index = SkillIndex::build(tax, model);
  const auto b5 = build_baseline_sets(occ, index, model, 0.5);
  const auto b6 = build_baseline_sets(occ, index, model, 0.6);
  const auto b7 = build_baseline_sets(occ, index, model, 0.7);
  for (const auto& o : occ.occupations()) {
    SkillSet u;
    for (const auto& s : map_tasks_to_skills(o, index, model, 0.6)) u.insert(s.begin(), s.end());
    CHECK(b6.sets.at(o.id) == u);
    CHECK(std::includes(b6.sets.at(o.id).begin(), b6.sets.at(o.id).end(), b7.sets.at(o.id).begin(),
                        b7.sets.at(o.id).end()));
    CHECK(std::includes(b5.sets.at(o.id).begin(), b5.sets.at(o.id).end(), b6.sets.at(o.id).begin(),
                        b6.sets.at(o.id).end()));
  }
  skillmap::testing::TempDir dir("baseline");
  write_baseline(dir / "b.tsv", b6);
  const auto back = read_baseline(dir / "b.tsv");
  CHECK(back.version == "2018");
  CHECK(back.tau == 0.6);
  CHECK(back.sets == b6.sets);
}

TEST_CASE("forward-looking sets") {
  BaselineSkillMap base{"2018", 0.6, {{"O1", {"a", "b"}}, {"O2", {"x", "y"}}}};
  BaselineSkillMap fwd{"2022", 0.6, {{"O1", {"b", "c"}}, {"O2", {"x"}}}};
  const auto f = forward_looking_sets(base, fwd);
  CHECK(f.sets.at("O1") == SkillSet{"c"});
  CHECK(f.sets.at("O2").empty());
  CHECK(forward_looking_sets(base, base).sets.at("O1").empty());
  BaselineSkillMap extra{"2022", 0.6, {{"O1", {"a"}}, {"O3", {"z"}}}};
  const auto g = forward_looking_sets(base, extra);
  CHECK(g.errors.count("O2") == 1);
  CHECK(g.errors.count("O3") == 1);
}

TEST_CASE("taxonomy stability") {
  std::vector<Occupation> a;
  for (int i = 0; i < 10; ++i) a.push_back({"O" + std::to_string(i), "Title " + std::to_string(i), {"Task."}});
  const OccupationTaxonomy ta("2018", a);
  const auto same = occupation_list_stability(ta, ta);
  CHECK(same.stability == 1.0);
  CHECK(task_set_stability(ta, ta).stability == 1.0);
  CHECK(task_set_stability(ta, ta).changed_tasks.empty());

  auto b = a;
  b[3].title = "Renamed";
  CHECK(occupation_list_stability(ta, OccupationTaxonomy("2022", b)).stability == 0.9);

  auto c = a;
  c[5].tasks.push_back("New task.");
  const auto r = task_set_stability(ta, OccupationTaxonomy("2022", c));
  REQUIRE(r.changed_tasks.size() == 1);
  CHECK(r.changed_tasks[0].first == "O5");
  CHECK(r.changed_tasks[0].second == 1);
  CHECK(to_record(r).find("stability=0.9") != std::string::npos);
}

TEST_CASE("taxonomy files round-trip") {
  skillmap::testing::TempDir dir("tax");
  const auto fx = make_fixture();
  write_fixture(dir.path(), fx);
  const auto skills = load_skill_taxonomy(dir / "skills.tsv", "2022");
  CHECK(skills.size() == 50);
  const auto occ = load_occupation_taxonomy(dir / "occupations.tsv", dir / "tasks.tsv", "2022");
  CHECK(occ.size() == 20);
  CHECK(occ.occupations()[0].tasks == fx.occupations_forward[0].tasks);
  CHECK_THROWS(load_skill_taxonomy(dir / "skills.tsv", "1999"));
}
