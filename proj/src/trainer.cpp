#include "skillmap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "skillmap/util.hpp"

namespace skillmap {

void TrainingConfig::validate() const {
  if (!(margin > 0.0)) throw std::invalid_argument("margin must be > 0");
  if (negatives < 1) throw std::invalid_argument("negatives must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
}

ContrastiveLoss contrastive_loss(const std::vector<Embedding>& table,
                                 const std::vector<ContrastiveTerm>& batch, double margin) {
  ContrastiveLoss out;
  if (table.empty()) return out;
  const auto m = table.front().size();
  out.gradients.assign(table.size(), Embedding::Zero(m));
  if (batch.empty()) return out;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (const auto& term : batch) {
    if (term.positives.empty()) throw std::invalid_argument("contrastive sample without a positive");
    if (term.negatives.size() != term.positives.size()) {
      throw std::invalid_argument("each positive needs its own negative list");
    }
    const Embedding& s = table.at(term.sentence);
    const double wp = inv_batch / static_cast<double>(term.positives.size());
    for (std::size_t p = 0; p < term.positives.size(); ++p) {
      const Embedding& pos = table.at(term.positives[p]);
      out.loss += wp * (1.0 - s.dot(pos));
      out.gradients[term.sentence] -= wp * pos;
      out.gradients[term.positives[p]] -= wp * s;
      const auto& negs = term.negatives[p];
      if (negs.empty()) throw std::invalid_argument("number of negatives must be >= 1");
      const double wn = wp / static_cast<double>(negs.size());
      for (auto n : negs) {
        const Embedding& neg = table.at(n);
        const double excess = s.dot(neg) - margin;
        if (excess > 0.0) {
          out.loss += wn * excess;
          out.gradients[term.sentence] += wn * neg;
          out.gradients[n] += wn * s;
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> sample_negatives(const std::vector<std::size_t>& positives,
                                          std::size_t label_count, std::size_t n,
                                          std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("number of negatives must be >= 1");
  std::vector<char> excluded(label_count, 0);
  std::size_t distinct = 0;
  for (auto p : positives) {
    if (p >= label_count) throw std::invalid_argument("positive label outside the label space");
    if (!excluded[p]) ++distinct;
    excluded[p] = 1;
  }
  if (label_count <= n + distinct) {
    throw std::invalid_argument("label space of " + std::to_string(label_count) +
                                " is too small for " + std::to_string(n) + " negatives");
  }
  std::vector<std::size_t> pool;
  pool.reserve(label_count - distinct);
  for (std::size_t i = 0; i < label_count; ++i) {
    if (!excluded[i]) pool.push_back(i);
  }
  // Partial Fisher-Yates.
  for (std::size_t k = 0; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

std::vector<std::vector<std::string>> sample_negatives(
    const std::vector<std::vector<std::string>>& positive_ids, const SkillTaxonomy& taxonomy,
    std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::string>> out;
  for (const auto& ids : positive_ids) {
    std::vector<std::size_t> pos;
    for (const auto& id : ids) {
      auto k = taxonomy.find(id);
      if (!k) throw std::invalid_argument("unknown skill id '" + id + "'");
      pos.push_back(*k);
    }
    std::vector<std::string> negs;
    for (auto k : sample_negatives(pos, taxonomy.size(), n, rng)) negs.push_back(taxonomy.skills()[k].id);
    out.push_back(std::move(negs));
  }
  return out;
}

AdamOptimizer::AdamOptimizer(std::size_t size, double beta1, double beta2, double eps)
    : m_(size, 0.0), v_(size, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grad,
                         double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

TrainingData make_training_data(const std::vector<SyntheticPair>& pairs, const SkillTaxonomy& taxonomy) {
  TrainingData data;
  for (const auto& s : taxonomy.skills()) data.label_texts.push_back(SkillTaxonomy::encoder_text(s));
  std::unordered_map<std::string, std::size_t> by_sentence;
  for (const auto& p : pairs) {
    if (p.split != Split::train) continue;
    auto k = taxonomy.find(p.skill_id);
    if (!k) throw std::invalid_argument("pair references unknown skill '" + p.skill_id + "'");
    auto [it, fresh] = by_sentence.emplace(p.sentence, data.examples.size());
    if (fresh) data.examples.push_back({p.sentence, {}});
    auto& labels = data.examples[it->second].labels;
    if (std::find(labels.begin(), labels.end(), *k) == labels.end()) labels.push_back(*k);
  }
  return data;
}

namespace {

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TrainResult train_biencoder(const TrainingData& data, const Vocabulary& vocab, std::size_t max_len,
                            const TrainingConfig& config, EncoderParams init) {
  config.validate();
  init.validate();
  if (data.examples.empty()) throw std::invalid_argument("training split is empty");
  if (init.dims().vocab != vocab.size()) {
    throw ShapeError("embedding", "rows " + std::to_string(init.dims().vocab) +
                                      " do not match vocabulary size " + std::to_string(vocab.size()));
  }
  TrainResult result{std::move(init), {}};
  if (config.epochs == 0) return result;

  std::vector<TokenSequence> sentence_tokens, label_tokens;
  for (const auto& e : data.examples) sentence_tokens.push_back(tokenize(e.text, vocab, max_len));
  for (const auto& t : data.label_texts) label_tokens.push_back(tokenize(t, vocab, max_len));

  EncoderParams& params = result.params;
  EncoderParams grad(params.dims());
  AdamOptimizer adam(params.data().size());
  std::vector<EncodeCache> caches;
  std::vector<Embedding> table;
  std::vector<std::size_t> slot_of(data.label_texts.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(data.examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, {0x5u, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t neg_epoch = config.resample_negatives ? static_cast<std::uint64_t>(epoch) : 0;

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      // Table layout: batch sentences first, then each distinct label once.
      std::vector<ContrastiveTerm> terms;
      std::vector<std::size_t> labels_in_batch;
      std::fill(slot_of.begin(), slot_of.end(), static_cast<std::size_t>(-1));
      const std::size_t n_sentences = stop - start;
      const auto slot = [&](std::size_t label) {
        if (slot_of[label] == static_cast<std::size_t>(-1)) {
          slot_of[label] = n_sentences + labels_in_batch.size();
          labels_in_batch.push_back(label);
        }
        return slot_of[label];
      };
      for (std::size_t k = start; k < stop; ++k) {
        const auto& ex = data.examples[order[k]];
        std::mt19937_64 rng(derive_seed(config.seed, {0xA1u, neg_epoch, order[k]}));
        ContrastiveTerm term;
        term.sentence = k - start;
        for (auto label : ex.labels) {
          term.positives.push_back(slot(label));
          std::vector<std::size_t> negs;
          for (auto n : sample_negatives(ex.labels, data.label_texts.size(), config.negatives, rng)) {
            negs.push_back(slot(n));
          }
          term.negatives.push_back(std::move(negs));
        }
        terms.push_back(std::move(term));
      }

      const std::size_t rows = n_sentences + labels_in_batch.size();
      if (caches.size() < rows) caches.resize(rows);
      table.resize(rows);
      for (std::size_t k = 0; k < n_sentences; ++k) {
        table[k] = encode(sentence_tokens[order[start + k]], params, &caches[k]);
      }
      for (std::size_t k = 0; k < labels_in_batch.size(); ++k) {
        table[n_sentences + k] = encode(label_tokens[labels_in_batch[k]], params, &caches[n_sentences + k]);
      }

      auto loss = contrastive_loss(table, terms, config.margin);
      if (!std::isfinite(loss.loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batches));
      }
      grad.set_zero();
      for (std::size_t k = 0; k < rows; ++k) {
        if (loss.gradients[k].isZero(0.0)) continue;
        encode_backward(caches[k], loss.gradients[k], params, grad);
      }
      const double norm = l2_norm(grad.data());
      if (!std::isfinite(norm)) {
        throw std::runtime_error("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batches));
      }
      if (norm > config.clip_norm) {
        const double scale = config.clip_norm / norm;
        for (auto& g : grad.data()) g *= scale;
      }
      adam.step(params.data(), grad.data(), config.learning_rate);
      epoch_loss += loss.loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    spdlog::debug("epoch {} mean loss {:.6f}", epoch, result.epoch_loss.back());
  }
  return result;
}

double batch_loss(const EncoderParams& params, const EncodedBatch& batch, double margin,
                  EncoderParams* grad) {
  std::vector<EncodeCache> caches(batch.sequences.size());
  std::vector<Embedding> table;
  for (std::size_t k = 0; k < batch.sequences.size(); ++k) {
    table.push_back(encode(batch.sequences[k], params, &caches[k]));
  }
  auto loss = contrastive_loss(table, batch.terms, margin);
  if (grad) {
    for (std::size_t k = 0; k < caches.size(); ++k) encode_backward(caches[k], loss.gradients[k], params, *grad);
  }
  return loss.loss;
}

double grad_check(const EncoderParams& params, const EncodedBatch& batch, double epsilon, double margin,
                  std::uint64_t seed, std::size_t coordinates) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) throw std::invalid_argument("epsilon must lie in [1e-6, 1e-3]");
  EncoderParams grad(params.dims());
  batch_loss(params, batch, margin, &grad);
  if (!grad.all_finite()) throw std::runtime_error("analytic gradient is not finite");

  const std::size_t total = params.data().size();
  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(coordinates, total));

  EncoderParams probe = params;
  double worst = 0.0;
  for (auto i : coords) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + epsilon;
    const double up = batch_loss(probe, batch, margin);
    probe.data()[i] = orig - epsilon;
    const double down = batch_loss(probe, batch, margin);
    probe.data()[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = grad.data()[i];
    if (!std::isfinite(numeric)) throw std::runtime_error("numeric gradient is not finite");
    const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Numerically stable -[y log p + (1-y) log(1-p)] with p = sigmoid(z).
double bce_from_logit(double z, int y) {
  return std::max(z, 0.0) - z * static_cast<double>(y) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

double Prescreener::probability(const Eigen::VectorXd& features) const {
  if (features.size() != weights.size()) throw ShapeError("prescreener", "feature length mismatch");
  return logistic(weights.dot(features) + bias);
}

void Prescreener::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "prescreener 1 " << weights.size() << '\n' << format_double(bias) << '\n';
  for (Eigen::Index i = 0; i < weights.size(); ++i) out << format_double(weights(i)) << '\n';
  write_file(path, out.str());
}

Prescreener Prescreener::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string tag;
  int version = 0;
  Eigen::Index dim = 0;
  in >> tag >> version >> dim;
  if (tag != "prescreener" || version != 1 || dim <= 0) {
    throw std::runtime_error(path.string() + ": not a prescreener file");
  }
  Prescreener p;
  std::string tok;
  in >> tok;
  p.bias = std::stod(tok);
  p.weights.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (!(in >> tok)) throw std::runtime_error(path.string() + ": truncated weights");
    p.weights(i) = std::stod(tok);
  }
  return p;
}

double binary_cross_entropy(const Prescreener& model, const std::vector<Eigen::VectorXd>& features,
                            const std::vector<int>& labels) {
  if (features.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    total += bce_from_logit(model.weights.dot(features[i]) + model.bias, labels[i]);
  }
  return total / static_cast<double>(features.size());
}

Prescreener train_prescreener(const std::vector<Eigen::VectorXd>& features, const std::vector<int>& labels,
                              const PrescreenConfig& config) {
  if (features.size() != labels.size()) throw std::invalid_argument("features and labels differ in length");
  if (features.empty()) throw std::invalid_argument("no training sentences");
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
    (y ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw std::invalid_argument("pre-screener needs both classes");

  const auto n = static_cast<Eigen::Index>(features.size());
  const auto d = features.front().size();
  Eigen::MatrixXd X(n, d + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (features[static_cast<std::size_t>(i)].size() != d) throw std::invalid_argument("feature lengths differ");
    X.row(i).head(d) = features[static_cast<std::size_t>(i)].transpose();
    X(i, d) = 1.0;
    y(i) = labels[static_cast<std::size_t>(i)];
  }
  // Standardize so the ridge penalty does not depend on feature scale.
  const Eigen::VectorXd mean = X.leftCols(d).colwise().mean().transpose();
  Eigen::VectorXd scale(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt((X.col(j).array() - mean(j)).square().mean());
    scale(j) = sd > 1e-12 ? sd : 1.0;
    X.col(j) = (X.col(j).array() - mean(j)) / scale(j);
  }
  Eigen::VectorXd ridge = Eigen::VectorXd::Constant(d + 1, config.l2);
  ridge(d) = 0.0;
  const auto objective = [&](const Eigen::VectorXd& beta) {
    Eigen::VectorXd z = X * beta;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += bce_from_logit(z(i), static_cast<int>(y(i)));
    return total / static_cast<double>(n) + 0.5 * beta.cwiseProduct(ridge).dot(beta);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  double current = objective(beta);
  for (int it = 0; it < config.max_iterations; ++it) {
    Eigen::VectorXd z = X * beta;
    Eigen::VectorXd p = z.unaryExpr([](double v) { return logistic(v); });
    Eigen::VectorXd g = X.transpose() * (p - y) / static_cast<double>(n) + ridge.cwiseProduct(beta);
    Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X / static_cast<double>(n);
    H.diagonal() += ridge;
    H.diagonal().array() += 1e-12;
    Eigen::VectorXd step = H.ldlt().solve(g);
    double t = 1.0;
    Eigen::VectorXd next = beta - step;
    double value = objective(next);
    while (value > current && t > 1e-6) {
      t *= 0.5;
      next = beta - t * step;
      value = objective(next);
    }
    const double moved = (next - beta).norm();
    beta = next;
    current = value;
    if (moved < config.tolerance) break;
  }
  // Fold the standardization back into raw-feature weights.
  Prescreener out;
  out.weights = beta.head(d).cwiseQuotient(scale);
  out.bias = beta(d) - out.weights.dot(mean);
  return out;
}

Prescreener train_prescreener(const std::vector<LabeledSentence>& sentences, const EncoderModel& model,
                              const PrescreenConfig& config) {
  std::vector<Eigen::VectorXd> features;
  std::vector<int> labels;
  for (const auto& s : sentences) {
    features.push_back(model.pooled(s.text));
    labels.push_back(s.label);
  }
  return train_prescreener(features, labels, config);
}

std::vector<std::size_t> prescreen(const std::vector<double>& probabilities) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] >= 0.5) kept.push_back(i);
  }
  return kept;
}

std::vector<std::string> prescreen(const std::vector<std::string>& sentences, const Prescreener& classifier,
                                   const EncoderModel& model) {
  std::vector<double> probs;
  for (const auto& s : sentences) probs.push_back(classifier.probability(model.pooled(s)));
  std::vector<std::string> kept;
  for (auto i : prescreen(probs)) kept.push_back(sentences[i]);
  return kept;
}

// ---------------------------------------------------------------------------

std::size_t rank_of(const Eigen::VectorXd& scores, std::size_t truth) {
  const double target = scores(static_cast<Eigen::Index>(truth));
  std::size_t rank = 1;
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    if (scores(k) > target || (scores(k) == target && static_cast<std::size_t>(k) < truth)) ++rank;
  }
  return rank;
}

MetricsReport metrics_from_ranks(const std::vector<std::size_t>& ranks) {
  MetricsReport r;
  r.queries = ranks.size();
  if (ranks.empty()) return r;
  double rr = 0.0;
  std::size_t hits = 0;
  for (auto k : ranks) {
    if (k < 1) throw std::invalid_argument("ranks are 1-based");
    rr += 1.0 / static_cast<double>(k);
    if (k <= 5) ++hits;
  }
  r.mrr = rr / static_cast<double>(ranks.size());
  r.recall_at_5 = static_cast<double>(hits) / static_cast<double>(ranks.size());
  return r;
}

MetricsReport evaluate_retrieval(const std::vector<SyntheticPair>& eval_pairs, const EncoderModel& model,
                                 const SkillIndex& index) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < index.ids().size(); ++i) pos[index.ids()[i]] = i;
  std::vector<std::size_t> ranks;
  for (const auto& p : eval_pairs) {
    auto it = pos.find(p.skill_id);
    if (it == pos.end()) throw std::invalid_argument("eval pair references unindexed skill '" + p.skill_id + "'");
    ranks.push_back(rank_of(index.scores(model.embed(p.sentence)), it->second));
  }
  return metrics_from_ranks(ranks);
}

std::string to_record(const MetricsReport& report) {
  std::ostringstream out;
  out << "mrr=" << format_double(report.mrr) << '\n'
      << "recall_at_5=" << format_double(report.recall_at_5) << '\n'
      << "q=" << report.queries << '\n';
  return out.str();
}

}  // namespace skillmap
