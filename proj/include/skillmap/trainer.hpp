#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "skillmap/corpus.hpp"
#include "skillmap/encoder.hpp"
#include "skillmap/taxonomy.hpp"

namespace skillmap {

struct TrainingConfig {
  double margin = 0.5;            // gamma
  std::size_t negatives = 5;      // N, per positive
  std::size_t batch_size = 32;    // B
  int epochs = 10;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  std::uint64_t seed = 7;
  bool resample_negatives = true;  // fresh negatives every epoch

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// One sample of the contrastive objective, as indices into an embedding table.
// negatives[p] holds the negatives drawn for positives[p].
struct ContrastiveTerm {
  std::size_t sentence = 0;
  std::vector<std::size_t> positives;
  std::vector<std::vector<std::size_t>> negatives;
};

struct ContrastiveLoss {
  double loss = 0.0;
  std::vector<Embedding> gradients;  // one per table entry
};

// mean over terms of mean over positives of
//   (1 - s.p) + (1/N) sum_j max(0, s.n_j - margin)
ContrastiveLoss contrastive_loss(const std::vector<Embedding>& table,
                                 const std::vector<ContrastiveTerm>& batch, double margin);

// n distinct labels from [0, label_count) excluding positives, uniformly
// without replacement.
std::vector<std::size_t> sample_negatives(const std::vector<std::size_t>& positives,
                                          std::size_t label_count, std::size_t n,
                                          std::mt19937_64& rng);
// Per sample, negatives by skill id.
std::vector<std::vector<std::string>> sample_negatives(
    const std::vector<std::vector<std::string>>& positive_ids, const SkillTaxonomy& taxonomy,
    std::size_t n, std::uint64_t seed);

// Adam with bias correction.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grad, double learning_rate);

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainingExample {
  std::string text;
  std::vector<std::size_t> labels;
};

// Sentences paired with the label texts they should retrieve.
struct TrainingData {
  std::vector<std::string> label_texts;
  std::vector<TrainingExample> examples;
};

// Train-split pairs grouped by sentence; labels index the taxonomy order.
TrainingData make_training_data(const std::vector<SyntheticPair>& pairs, const SkillTaxonomy& taxonomy);

struct TrainResult {
  EncoderParams params;
  std::vector<double> epoch_loss;
};

// One shared encoder embeds both sentences and labels.
TrainResult train_biencoder(const TrainingData& data, const Vocabulary& vocab, std::size_t max_len,
                            const TrainingConfig& config, EncoderParams init);

// Shared-encoder loss over a batch of token sequences, for gradient checks.
struct EncodedBatch {
  std::vector<TokenSequence> sequences;
  std::vector<ContrastiveTerm> terms;
};
double batch_loss(const EncoderParams& params, const EncodedBatch& batch, double margin,
                  EncoderParams* grad = nullptr);

// Max relative error between analytic and central-difference gradients over
// up to `coordinates` sampled coordinates. Throws on non-finite gradients.
double grad_check(const EncoderParams& params, const EncodedBatch& batch, double epsilon,
                  double margin = 0.5, std::uint64_t seed = 11, std::size_t coordinates = 200);

// Logistic head over pooled encoder features.
struct Prescreener {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double probability(const Eigen::VectorXd& features) const;
  void save(const std::filesystem::path& path) const;
  static Prescreener load(const std::filesystem::path& path);
};

struct PrescreenConfig {
  int max_iterations = 100;
  double l2 = 1e-4;
  double tolerance = 1e-10;
};

double binary_cross_entropy(const Prescreener& model, const std::vector<Eigen::VectorXd>& features,
                            const std::vector<int>& labels);
// Newton iterations on the mean cross-entropy plus a small ridge term applied
// to standardized features.
Prescreener train_prescreener(const std::vector<Eigen::VectorXd>& features,
                              const std::vector<int>& labels, const PrescreenConfig& config = {});
Prescreener train_prescreener(const std::vector<LabeledSentence>& sentences, const EncoderModel& model,
                              const PrescreenConfig& config = {});

// Indices of probabilities >= 0.5, in order.
std::vector<std::size_t> prescreen(const std::vector<double>& probabilities);
std::vector<std::string> prescreen(const std::vector<std::string>& sentences,
                                   const Prescreener& classifier, const EncoderModel& model);

struct MetricsReport {
  double mrr = 0.0;
  double recall_at_5 = 0.0;
  std::size_t queries = 0;
};

// 1-based rank of truth by descending score, ties by ascending index.
std::size_t rank_of(const Eigen::VectorXd& scores, std::size_t truth);
MetricsReport metrics_from_ranks(const std::vector<std::size_t>& ranks);
MetricsReport evaluate_retrieval(const std::vector<SyntheticPair>& eval_pairs, const EncoderModel& model,
                                 const SkillIndex& index);
std::string to_record(const MetricsReport& report);

}  // namespace skillmap
