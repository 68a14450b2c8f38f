#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "skillmap/fixture.hpp"
#include "skillmap/trainer.hpp"
#include "test_support.hpp"

using namespace skillmap;

namespace {

Embedding unit(std::initializer_list<double> v) {
  Embedding e(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) e(i++) = x;
  return e.normalized();
}

// Sentence at 60 degrees from the positive and with cosine 0.9 to a negative.
std::vector<Embedding> hand_table() {
  const double s = std::sqrt(1.0 - 0.9 * 0.9);
  return {unit({1, 0, 0}), unit({0.5, std::sqrt(0.75), 0}), unit({0.9, 0, s})};
}

EncodedBatch toy_batch(const Vocabulary& vocab) {
  EncodedBatch b;
  for (const char* t : {"abc sql", "python r", "sql skill", "r skill", "python skill", "ab c"}) {
    b.sequences.push_back(tokenize(t, vocab, 12));
  }
  b.terms.push_back({0, {2}, {{3, 4}}});
  b.terms.push_back({1, {4, 3}, {{5}, {2}}});
  return b;
}

}  // namespace

TEST_CASE("contrastive loss hand values") {
  SUBCASE("perfect positive and inactive negative") {
    std::vector<Embedding> table = {unit({1, 0}), unit({1, 0}), unit({0, 1})};
    const auto r = contrastive_loss(table, {{0, {1}, {{2}}}}, 0.5);
    CHECK(r.loss == 0.0);
  }
  SUBCASE("0.5 from the positive, 0.4 from the negative") {
    const auto r = contrastive_loss(hand_table(), {{0, {1}, {{2}}}}, 0.5);
    CHECK(r.loss == doctest::Approx(0.9).epsilon(1e-12));
  }
  SUBCASE("two positives average") {
    std::vector<Embedding> table = {unit({1, 0}), unit({1, 0}), unit({0, 1}), unit({-1, 0})};
    const auto r = contrastive_loss(table, {{0, {1, 2}, {{3}, {3}}}}, 0.5);
    CHECK(r.loss == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("negative sampling") {
  std::mt19937_64 rng(4);
  const auto neg = sample_negatives({7}, 50, 5, rng);
  CHECK(neg.size() == 5);
  CHECK(std::set<std::size_t>(neg.begin(), neg.end()).size() == 5);
  for (auto n : neg) {
    CHECK(n != 7);
    CHECK(n < 50);
  }
  std::mt19937_64 a(9), b(9);
  CHECK(sample_negatives({1, 2}, 50, 5, a) == sample_negatives({1, 2}, 50, 5, b));
  std::mt19937_64 c(1);
  CHECK_THROWS(sample_negatives({0, 1}, 6, 5, c));
}

TEST_CASE("analytic gradients match finite differences on a toy encoder") {
  const auto vocab = Vocabulary::build({"abc sql python r skill"});
  EncoderDims dims;
  dims.vocab = vocab.size();
  dims.input = dims.hidden = dims.attention = dims.output = 8;
  const auto params = EncoderParams::random(dims, 21, 0.3);
  const auto batch = toy_batch(vocab);
  for (double eps : {1e-5, 1e-4}) CHECK(grad_check(params, batch, eps, 0.5, 3, 200) < 1e-4);

  SUBCASE("zero attention vector still gives finite gradients") {
    auto p = params;
    p.vector(EncoderParams::kAttnVector).setZero();
    EncoderParams grad(dims);
    const double loss = batch_loss(p, batch, 0.5, &grad);
    CHECK(std::isfinite(loss));
    CHECK(grad.all_finite());
    CHECK(grad_check(p, batch, 1e-5, 0.5, 4, 200) < 1e-4);
  }
  CHECK_THROWS(grad_check(params, batch, 1e-9));
}

TEST_CASE("training loop") {
  const auto all = toy_skills();
  const std::vector<Skill> skills(all.begin(), all.begin() + 10);
  const SkillTaxonomy tax("2018", skills);
  const auto pairs = generate_synthetic_pairs(tax, 2, 5);
  const auto data = make_training_data(pairs, tax);
  std::vector<std::string> texts = data.label_texts;
  for (const auto& e : data.examples) texts.push_back(e.text);
  const auto vocab = Vocabulary::build(texts);
  EncoderDims dims;
  dims.vocab = vocab.size();
  dims.input = dims.hidden = dims.attention = 8;
  dims.output = 16;
  const auto init = EncoderParams::random(dims, 1);

  TrainingConfig config;
  config.negatives = 3;
  config.batch_size = 8;
  config.learning_rate = 1e-2;

  SUBCASE("zero epochs leaves the weights alone") {
    config.epochs = 0;
    CHECK(train_biencoder(data, vocab, 24, config, init).params == init);
  }
  SUBCASE("loss falls and runs repeat exactly") {
    config.epochs = 30;
    const auto a = train_biencoder(data, vocab, 24, config, init);
    REQUIRE(a.epoch_loss.size() == 30);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    const auto b = train_biencoder(data, vocab, 24, config, init);
    CHECK(a.params == b.params);
  }
  SUBCASE("invalid settings are rejected") {
    config.margin = -1.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  }
}

TEST_CASE("adam takes a bias-corrected first step of size lr") {
  AdamOptimizer opt(2);
  std::vector<double> p = {1.0, -1.0};
  opt.step(p, {0.5, -2.0}, 0.1);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-0.9).epsilon(1e-6));
}

TEST_CASE("pre-screener") {
  SUBCASE("zero weights give p = 0.5 and ln 2 loss") {
    Prescreener m;
    m.weights = Eigen::VectorXd::Zero(3);
    std::vector<Eigen::VectorXd> x = {Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(3)};
    CHECK(m.probability(x[0]) == 0.5);
    CHECK(binary_cross_entropy(m, x, {1, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("separable data is fit") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Eigen::VectorXd> x;
    std::vector<int> y;
    for (int i = 0; i < 400; ++i) {
      Eigen::VectorXd v(4);
      for (int j = 0; j < 4; ++j) v(j) = 0.01 * n(rng);
      const int label = v(0) + 0.5 * v(1) > 0 ? 1 : 0;
      v(0) += label ? 0.005 : -0.005;
      x.push_back(v);
      y.push_back(label);
    }
    const auto m = train_prescreener(x, y);
    int ok = 0;
    for (std::size_t i = 0; i < x.size(); ++i) ok += (m.probability(x[i]) >= 0.5) == (y[i] == 1);
    CHECK(static_cast<double>(ok) / static_cast<double>(x.size()) >= 0.99);
  }
  SUBCASE("threshold is inclusive") {
    CHECK(prescreen(std::vector<double>{0.9, 0.9}).size() == 2);
    CHECK(prescreen(std::vector<double>{0.1, 0.1}).empty());
    CHECK(prescreen(std::vector<double>{0.5}) == std::vector<std::size_t>{0});
  }
  SUBCASE("save and load") {
    skillmap::testing::TempDir dir("prescreener");
    Prescreener m;
    m.weights = Eigen::VectorXd::LinSpaced(4, -1.0, 0.3);
    m.bias = 0.125;
    m.save(dir / "p.txt");
    const auto back = Prescreener::load(dir / "p.txt");
    CHECK(back.bias == m.bias);
    CHECK(back.weights == m.weights);
  }
  CHECK_THROWS(train_prescreener(std::vector<Eigen::VectorXd>{Eigen::VectorXd::Ones(2)}, {1}));
}

TEST_CASE("retrieval metrics") {
  const auto all_first = metrics_from_ranks({1, 1, 1});
  CHECK(all_first.mrr == 1.0);
  CHECK(all_first.recall_at_5 == 1.0);
  const auto r = metrics_from_ranks({1, 2, 4});
  CHECK(r.mrr == (1.0 + 0.5 + 0.25) / 3.0);
  CHECK(r.recall_at_5 == 1.0);
  CHECK(metrics_from_ranks({6}).recall_at_5 == 0.0);
  CHECK(metrics_from_ranks({}).queries == 0);

  Eigen::VectorXd s(4);
  s << 0.2, 0.9, 0.2, 0.1;
  CHECK(rank_of(s, 1) == 1);
  CHECK(rank_of(s, 0) == 2);
  CHECK(rank_of(s, 2) == 3);
}
