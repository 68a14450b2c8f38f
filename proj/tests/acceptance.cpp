// Acceptance checks: one PASS/FAIL line per criterion. Exit status counts
// failures outside the --allow-fail list.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "econ_oracle.hpp"
#include "skillmap/econ.hpp"
#include "skillmap/encoder.hpp"
#include "skillmap/extraction.hpp"
#include "skillmap/pipeline.hpp"
#include "skillmap/taxonomy.hpp"
#include "skillmap/trainer.hpp"
#include "skillmap/util.hpp"
#include "test_support.hpp"

using namespace skillmap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Toy pipeline runs shared by the criteria that need trained artifacts.
struct ToyRuns {
  PipelineConfig first;
  PipelineConfig second;
  double first_seconds = 0.0;
  double second_seconds = 0.0;
  std::string error;
};

PipelineConfig toy_config(const fs::path& out) {
  auto c = load_config(fs::path(SKILLMAP_SOURCE_DIR) / "configs" / "toy.ini");
  c.out_dir = out;
  return c;
}

ToyRuns& toy_runs(const fs::path& root) {
  static ToyRuns runs;
  static bool done = false;
  if (done) return runs;
  done = true;
  try {
    runs.first = toy_config(root / "run_a");
    runs.second = toy_config(root / "run_b");
    auto t0 = Clock::now();
    run_stage(runs.first, Stage::all);
    runs.first_seconds = seconds_since(t0);
    t0 = Clock::now();
    run_stage(runs.second, Stage::all);
    runs.second_seconds = seconds_since(t0);
  } catch (const std::exception& e) {
    runs.error = e.what();
  }
  return runs;
}

std::map<std::string, std::string> key_values(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  // Twenty tokens: pad, unknown and eighteen characters.
  const auto vocab = Vocabulary::build({"abcdefghijklmnopqr"}, VocabConfig{1000, 0});
  EncoderDims dims;
  dims.vocab = vocab.size();
  dims.input = dims.hidden = dims.attention = dims.output = 8;
  const auto params = EncoderParams::random(dims, 21, 0.3);
  EncodedBatch batch;
  for (const char* t : {"abc def", "ghi jkl", "mno", "pqr abc", "fed cba", "aq"}) {
    batch.sequences.push_back(tokenize(t, vocab, 12));
  }
  batch.terms.push_back({0, {2}, {{3, 4}}});
  batch.terms.push_back({1, {4, 3}, {{5}, {2}}});
  const double err = grad_check(params, batch, 1e-4, 0.5, 3, params.data().size());
  const double secs = seconds_since(t0);
  return {err < 1e-4 && secs < 60.0 && vocab.size() == 20,
          "V=" + std::to_string(vocab.size()) + " coords=" + std::to_string(params.data().size()) +
              " max_rel_err=" + fmt(err) + " time=" + fmt(secs) + "s"};
}

Outcome embedding_contract() {
  std::vector<std::string> texts = {"the quick brown fox jumps over the lazy dog 0123456789 数据分析"};
  const auto vocab = Vocabulary::build(texts);
  EncoderDims dims;
  dims.vocab = vocab.size();
  const auto params = EncoderParams::random(dims, 5);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> token(2, static_cast<int>(vocab.size()) - 1);
  std::uniform_int_distribution<std::size_t> length(1, 64);
  double worst_norm = 0.0;
  double worst_alpha = 0.0;
  for (int i = 0; i < 1000; ++i) {
    TokenSequence seq;
    seq.ids.assign(64, Vocabulary::kPad);
    seq.length = length(rng);
    for (std::size_t t = 0; t < seq.length; ++t) seq.ids[t] = token(rng);
    EncodeCache cache;
    const auto e = encode(seq, params, &cache);
    worst_norm = std::max(worst_norm, std::abs(e.norm() - 1.0));
    worst_alpha = std::max(worst_alpha, std::abs(cache.alpha.sum() - 1.0));
  }
  return {worst_norm <= 1e-6 && worst_alpha <= 1e-6,
          "inputs=1000 max|norm-1|=" + fmt(worst_norm) + " max|sum(alpha)-1|=" + fmt(worst_alpha)};
}

Outcome learning_signal(const fs::path& root) {
  const auto& runs = toy_runs(root);
  if (!runs.error.empty()) return {false, "toy run failed: " + runs.error};
  auto m = key_values(artifacts::metrics(runs.first));
  const double mrr = std::stod(m.at("mrr"));
  const double r5 = std::stod(m.at("recall_at_5"));
  const double q = std::stod(m.at("q"));
  const double untrained = std::stod(m.at("untrained_recall_at_5"));
  const auto manifest = nlohmann::json::parse(read_file(artifacts::manifest(runs.first, Stage::train)));
  const double train_seconds = std::stod(manifest.at("notes").at("train_seconds").get<std::string>());
  const bool trained_ok = r5 >= 0.80 && mrr >= 0.60 && q >= 500 && train_seconds < 300.0;
  const bool untrained_ok = std::abs(untrained - 0.10) <= 0.05;
  return {trained_ok && untrained_ok,
          "trained R@5=" + fmt(r5) + " MRR=" + fmt(mrr) + " queries=" + fmt(q) + " train=" + fmt(train_seconds) +
              "s [" + (trained_ok ? "ok" : "bad") + "]; untrained R@5=" + fmt(untrained) + " vs 0.10+-0.05 [" +
              (untrained_ok ? "ok" : "out of band") + "]"};
}

Outcome retrieval_math() {
  bool ok = true;
  const auto r = metrics_from_ranks({1, 2, 4});
  ok &= r.mrr == 7.0 / 12.0 && r.recall_at_5 == 1.0 && r.queries == 3;
  const auto mixed = metrics_from_ranks({1, 6, 3, 10});
  ok &= mixed.mrr == (1.0 + 1.0 / 6.0 + 1.0 / 3.0 + 0.1) / 4.0 && mixed.recall_at_5 == 0.5;
  ok &= metrics_from_ranks({5}).recall_at_5 == 1.0 && metrics_from_ranks({6}).recall_at_5 == 0.0;
  Eigen::VectorXd s(5);
  s << 0.2, 0.9, 0.2, 0.1, 0.95;
  ok &= rank_of(s, 4) == 1 && rank_of(s, 1) == 2 && rank_of(s, 0) == 3 && rank_of(s, 2) == 4 && rank_of(s, 3) == 5;
  std::vector<std::size_t> ranks;
  for (std::size_t t : {4, 1, 0, 2, 3}) ranks.push_back(rank_of(s, t));
  const auto from_scores = metrics_from_ranks(ranks);
  ok &= from_scores.mrr == (1.0 + 0.5 + 1.0 / 3.0 + 0.25 + 0.2) / 5.0 && from_scores.recall_at_5 == 1.0;
  return {ok, "ranks [1,2,4] -> MRR=" + fmt(r.mrr) + " R@5=" + fmt(r.recall_at_5)};
}

Outcome index_fidelity() {
  const auto t0 = Clock::now();
  const auto labels = skillmap::testing::clustered_labels(10000, 128, 100, 1.0, 31);
  const auto queries = skillmap::testing::noisy_queries(labels, 10000, 1.0, 32);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "S%05zu", i);
    ids.push_back(buf);
  }
  IndexConfig cfg;
  cfg.mode = IndexMode::approximate;
  const auto index = SkillIndex::build(ids, labels, cfg);
  std::size_t agree = 0;
  for (const auto& q : queries) agree += index.search(q, 1)[0].index == index.search_exact(q, 1)[0].index;
  const double share = static_cast<double>(agree) / static_cast<double>(queries.size());
  return {share >= 0.99, "labels=10000 queries=10000 top1_agreement=" + fmt(share) + " time=" + fmt(seconds_since(t0)) + "s"};
}

bool subset(const SkillSet& a, const SkillSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

Outcome taxonomy_algebra(const fs::path& root) {
  const auto& runs = toy_runs(root);
  if (!runs.error.empty()) return {false, "toy run failed: " + runs.error};
  const auto& c = runs.first;
  const auto model = load_model(c);
  std::map<double, BaselineSkillMap> base;
  std::map<double, BaselineSkillMap> fwd;
  const auto occ_base = load_occupation_taxonomy(c.occupations, c.tasks, c.base_version);
  const auto occ_fwd = load_occupation_taxonomy(c.occupations, c.tasks, c.forward_version);
  const auto idx_base = SkillIndex::build(load_skill_taxonomy(c.skills, c.base_version), model);
  const auto idx_fwd = SkillIndex::build(load_skill_taxonomy(c.skills, c.forward_version), model);
  for (double tau : {0.5, 0.6, 0.7}) {
    base[tau] = build_baseline_sets(occ_base, idx_base, model, tau);
    fwd[tau] = build_baseline_sets(occ_fwd, idx_fwd, model, tau);
  }
  std::size_t checked = 0;
  bool monotone = true;
  for (const auto* maps : {&base, &fwd}) {
    for (const auto& [o, s5] : maps->at(0.5).sets) {
      monotone &= subset(maps->at(0.7).sets.at(o), maps->at(0.6).sets.at(o)) && subset(maps->at(0.6).sets.at(o), s5);
      ++checked;
    }
  }
  bool disjoint = true;
  for (double tau : {0.5, 0.6, 0.7}) {
    const auto fl = forward_looking_sets(base[tau], fwd[tau]);
    for (const auto& [o, f] : fl.sets) {
      const auto it = base[tau].sets.find(o);
      if (it == base[tau].sets.end()) continue;
      for (const auto& s : f) disjoint &= it->second.count(s) == 0;
    }
  }
  const auto stored = read_baseline(artifacts::baseline(c, c.base_version));
  const bool matches_stage = stored.sets == base[0.6].sets;
  const double list = occupation_list_stability(occ_base, occ_base).stability;
  const double tasks = task_set_stability(occ_base, occ_base).stability;
  const bool ok = monotone && disjoint && matches_stage && list == 1.0 && tasks == 1.0;
  return {ok, "occupation sets checked=" + std::to_string(checked) + " monotone=" + (monotone ? "yes" : "no") +
                  " forward_disjoint=" + (disjoint ? "yes" : "no") + " stage_sets_match=" +
                  (matches_stage ? "yes" : "no") + " identical stability list=" + fmt(list) + " tasks=" + fmt(tasks)};
}

Outcome panel_identities(const fs::path& root) {
  const auto& runs = toy_runs(root);
  if (!runs.error.empty()) return {false, "toy run failed: " + runs.error};
  const auto& c = runs.first;

  // aligned + nonaligned against the extracted postings of each cell.
  const auto postings = read_extracted(artifacts::extracted(c));
  std::map<std::tuple<std::string, std::string, int>, std::size_t> mentions;
  for (const auto& p : postings) {
    if (!p.error) mentions[{p.firm_id, p.occ_id, p.year}] += p.skills.size();
  }
  const auto cells = read_panel(artifacts::panel(c));
  std::size_t bad = 0;
  for (const auto& cell : cells) {
    if (cell.aligned + cell.nonaligned != mentions[{cell.firm_id, cell.occ_id, cell.year}]) ++bad;
  }
  const bool sums_ok = bad == 0 && !cells.empty() && cells.size() == mentions.size();

  const auto stock = ai_stock(std::map<int, double>{{2018, 10.0}, {2019, 20.0}}, 0.15);
  const bool stock_ok = stock.size() == 2 && stock.at(2018) == 10.0 && std::abs(stock.at(2019) - 28.5) <= 1e-12;

  // A posting and its verbatim duplicate form a cell of their own.
  const auto model = load_model(c);
  const auto prescreener = Prescreener::load(artifacts::prescreener(c));
  const auto index = SkillIndex::build(load_skill_taxonomy(c.skills, c.base_version), model);
  auto loaded = load_postings(c.postings);
  JobPosting original = loaded.postings.at(0);
  original.firm_id = "DUPLICATE_FIRM";
  JobPosting copy = original;
  copy.posting_id = original.posting_id + "_copy";
  std::vector<PostingSkills> pair;
  for (const auto& p : {original, copy}) {
    auto r = extract_skills(p, prescreener, model, index);
    r.occ_id = "O_DUP";
    pair.push_back(std::move(r));
  }
  const auto dup_cells = aggregate_panel(pair, PanelInputs{});
  const bool dup_ok = dup_cells.size() == 1 && dup_cells[0].postings == 2 && dup_cells[0].consistency &&
                      *dup_cells[0].consistency == 1.0;

  return {sums_ok && stock_ok && dup_ok,
          "cells=" + std::to_string(cells.size()) + " sum_mismatches=" + std::to_string(bad) + " stock=[" +
              fmt(stock.at(2018)) + ", " + fmt(stock.at(2019)) + "] duplicate_consistency=" +
              (dup_cells.size() == 1 && dup_cells[0].consistency ? fmt(*dup_cells[0].consistency) : "none")};
}

DataFrame oracle_panel(std::size_t firms, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::string> f, o, yr;
  std::vector<double> y, x, c, z;
  for (std::size_t i = 0; i < firms; ++i) {
    const double fe = g(rng);
    for (int occ = 0; occ < 4; ++occ) {
      for (int t = 0; t < 5; ++t) {
        if (u(rng) > 0.75) continue;
        const double zi = g(rng);
        const double xi = 0.8 * zi + 0.5 * fe + g(rng);
        const double ci = g(rng);
        f.push_back("F" + std::to_string(i));
        o.push_back("O" + std::to_string(occ));
        yr.push_back(std::to_string(2018 + t));
        x.push_back(xi);
        c.push_back(ci);
        z.push_back(zi);
        y.push_back(0.3 * xi - 0.2 * ci + fe + 0.1 * occ + 0.05 * t + (1.0 + std::abs(xi)) * g(rng));
      }
    }
  }
  DataFrame df;
  df.add_key("firm_id", f);
  df.add_key("occ_id", o);
  df.add_key("year", yr);
  df.add_numeric("y", y);
  df.add_numeric("x", x);
  df.add_numeric("c", c);
  df.add_numeric("z", z);
  return df;
}

Outcome fe_oracle() {
  const auto df = oracle_panel(120, 77);
  double coef_err = 0.0;
  double se_err = 0.0;
  const std::vector<std::vector<std::string>> designs = {
      {"firm_id"}, {"firm_id", "year"}, {"firm_id", "occ_id", "year"}, {"firm_id", "occ_id*year"}};
  for (const auto& fe : designs) {
    RegressionSpec s;
    s.name = "oracle";
    s.outcome = "y";
    s.regressor = "x";
    s.controls = {"c"};
    s.fixed_effects = fe;
    s.transform = Transform::level;
    const auto r = ols_fe(df, s);
    const auto o = oracle::ols(df, {"x", "c"}, "y", fe, "firm_id");
    for (int j = 0; j < 2; ++j) {
      coef_err = std::max(coef_err, std::abs(r.coefficients[static_cast<std::size_t>(j)] - o.slopes(j)));
      se_err = std::max(se_err, std::abs(r.se[static_cast<std::size_t>(j)] - o.se(j)));
    }
    const auto iv = tsls(df, s);
    const auto oi = oracle::tsls(df, {"x", "c"}, "z", "y", fe, "firm_id");
    for (int j = 0; j < 2; ++j) {
      coef_err = std::max(coef_err, std::abs(iv.coefficients[static_cast<std::size_t>(j)] - oi.slopes(j)));
      se_err = std::max(se_err, std::abs(iv.se[static_cast<std::size_t>(j)] - oi.se(j)));
    }
  }
  return {df.rows() <= 5000 && coef_err <= 1e-6 && se_err <= 1e-8,
          "obs=" + std::to_string(df.rows()) + " designs=" + std::to_string(designs.size()) +
              " max_coef_err=" + fmt(coef_err) + " max_se_err=" + fmt(se_err)};
}

Outcome causal_recovery() {
  const auto t0 = Clock::now();
  DgpConfig cfg;
  const auto sim = simulate_dgp(cfg);
  RegressionSpec s;
  s.name = "dgp";
  s.outcome = "y";
  s.controls = {"x1"};
  s.transform = Transform::level;
  const auto ols = ols_fe(sim.panel, s);
  const auto iv = tsls(sim.panel, s);
  const double beta = sim.truth.beta;
  const double iv_gap = std::abs(iv.coef("ai_stock") - beta) / iv.stderr_of("ai_stock");
  const double ols_gap = std::abs(ols.coef("ai_stock") - beta) / ols.stderr_of("ai_stock");

  auto same = sim.panel;
  same.add_numeric("same", sim.panel.numeric("ai_stock"));
  auto degenerate = s;
  degenerate.instrument = "same";
  const auto iv_same = tsls(same, degenerate);
  double degenerate_err = 0.0;
  for (std::size_t j = 0; j < ols.coefficients.size(); ++j) {
    degenerate_err = std::max(degenerate_err, std::abs(iv_same.coefficients[j] - ols.coefficients[j]));
  }
  const double secs = seconds_since(t0);
  const double sd = [&] {
    const auto& v = sim.firm_years.numeric("ai_stock");
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  }();
  return {iv_gap < 3.0 && ols_gap > 3.0 && degenerate_err <= 1e-8 && secs < 120.0,
          "beta=" + fmt(beta) + " tsls=" + fmt(iv.coef("ai_stock")) + " (" + fmt(iv_gap) + " SE) ols=" +
              fmt(ols.coef("ai_stock")) + " (" + fmt(ols_gap) + " SE) first_stage=" +
              fmt(iv.first_stage_coef.value_or(NAN)) + " F=" + fmt(iv.first_stage_f.value_or(NAN)) + " stock_sd=" +
              fmt(sd) + " degenerate_err=" + fmt(degenerate_err) + " time=" + fmt(secs) + "s"};
}

Outcome determinism(const fs::path& root) {
  const auto& runs = toy_runs(root);
  if (!runs.error.empty()) return {false, "toy run failed: " + runs.error};
  std::vector<fs::path> a = {artifacts::panel(runs.first)};
  std::vector<fs::path> b = {artifacts::panel(runs.second)};
  for (const auto& name : estimate_names()) {
    a.push_back(artifacts::estimate(runs.first, name));
    b.push_back(artifacts::estimate(runs.second, name));
  }
  std::size_t identical = 0;
  for (std::size_t i = 0; i < a.size(); ++i) identical += read_file(a[i]) == read_file(b[i]);
  const double total = runs.first_seconds + runs.second_seconds;
  return {identical == a.size() && estimate_names().size() == 4 && total < 600.0,
          "identical_artifacts=" + std::to_string(identical) + "/" + std::to_string(a.size()) + " run_a=" +
              fmt(runs.first_seconds) + "s run_b=" + fmt(runs.second_seconds) + "s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skillmap acceptance checks"};
  std::vector<int> allow_fail;
  std::vector<int> only;
  app.add_option("--allow-fail", allow_fail, "criteria whose failure does not change the exit status");
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  skillmap::testing::TempDir root("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"embedding contract", embedding_contract},
      {"learning signal", [&] { return learning_signal(root.path()); }},
      {"retrieval math", retrieval_math},
      {"index fidelity", index_fidelity},
      {"taxonomy algebra", [&] { return taxonomy_algebra(root.path()); }},
      {"panel identities", [&] { return panel_identities(root.path()); }},
      {"fixed-effects oracle", fe_oracle},
      {"causal recovery", causal_recovery},
      {"end-to-end determinism", [&] { return determinism(root.path()); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool allowed = std::find(allow_fail.begin(), allow_fail.end(), id) != allow_fail.end();
    std::printf("%-4s %2d %-24s %s%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(),
                !o.pass && allowed ? " (known failure)" : "");
    std::fflush(stdout);
    if (!o.pass && !allowed) ++failures;
  }
  return failures;
}
