#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace skillmap {

using Embedding = Eigen::VectorXd;

class ShapeError : public std::runtime_error {
 public:
  ShapeError(std::string tensor, const std::string& what)
      : std::runtime_error("shape error in " + tensor + ": " + what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

// Splits lowercased text into segments: ASCII alphanumeric runs, CJK runs,
// and single other symbols. Whitespace separates segments and is dropped.
std::vector<std::vector<std::string>> pretokenize(std::string_view text);

struct VocabConfig {
  std::size_t min_bigram_count = 2;
  std::size_t max_bigrams = 3000;
};

// Characters plus frequent within-segment character bigrams.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();
  static Vocabulary build(const std::vector<std::string>& texts, const VocabConfig& config = {});

  std::size_t size() const { return tokens_.size(); }
  // kUnk when absent.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct TokenSequence {
  std::vector<int> ids;  // always max_len entries, padded with kPad
  std::size_t length = 0;
};

// Greedy within each segment: an in-vocabulary bigram wins over its first
// character. Empty text yields a single unknown token.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

struct EncoderDims {
  std::size_t vocab = 0;      // V
  std::size_t input = 64;     // h, embedding width
  std::size_t hidden = 64;    // b, per recurrent direction
  std::size_t attention = 64; // a
  std::size_t output = 128;   // m

  bool operator==(const EncoderDims&) const = default;
};

// All encoder weights in one flat buffer with named tensor views. The same
// type holds gradients.
class EncoderParams {
 public:
  using Matrix = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatrix = Eigen::Map<const Eigen::MatrixXd>;
  using RowMatrix = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstRowMatrix =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using Vector = Eigen::Map<Eigen::VectorXd>;
  using ConstVector = Eigen::Map<const Eigen::VectorXd>;

  enum Tensor : std::size_t {
    kEmbedding,
    kFwdInput, kFwdRecurrent, kFwdBias,
    kBwdInput, kBwdRecurrent, kBwdBias,
    kAttnWeight, kAttnBias, kAttnVector,
    kProjWeight, kProjBias,
    kTensorCount
  };

  struct TensorInfo {
    const char* name;
    std::size_t rows;
    std::size_t cols;
    std::size_t offset;
  };

  EncoderParams() = default;
  // Zero-filled.
  explicit EncoderParams(const EncoderDims& dims);
  // Uniform in [-scale, scale] from a seeded generator.
  static EncoderParams random(const EncoderDims& dims, std::uint64_t seed, double scale = 0.08);

  const EncoderDims& dims() const { return dims_; }
  const TensorInfo& info(Tensor t) const { return layout_[t]; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  void set_zero();

  // V x h, one row per token.
  RowMatrix embedding();
  ConstRowMatrix embedding() const;
  Matrix matrix(Tensor t);
  ConstMatrix matrix(Tensor t) const;
  Vector vector(Tensor t);
  ConstVector vector(Tensor t) const;

  // Throws ShapeError naming the first inconsistent tensor.
  void validate() const;
  bool all_finite() const;

  bool operator==(const EncoderParams& o) const { return dims_ == o.dims_ && data_ == o.data_; }

  // Binary dump: magic, format version, then named tensors with shapes.
  void save(const std::filesystem::path& path) const;
  static EncoderParams load(const std::filesystem::path& path);

 private:
  void build_layout();
  EncoderDims dims_;
  std::vector<TensorInfo> layout_;
  std::vector<double> data_;
};

// Intermediate values of one forward pass, kept for backpropagation.
struct EncodeCache {
  std::vector<int> ids;  // unpadded
  Eigen::MatrixXd inputs;             // h x L
  Eigen::MatrixXd fwd_gates, bwd_gates;  // 4b x L, activated [i f g o]
  Eigen::MatrixXd fwd_cell, bwd_cell;    // b x L
  Eigen::MatrixXd fwd_hidden, bwd_hidden;
  Eigen::MatrixXd states;             // 2b x L, [forward; backward]
  Eigen::MatrixXd attn_hidden;        // a x L, tanh(W_a o_t + b_a)
  Eigen::VectorXd alpha;              // L
  Eigen::VectorXd context;            // 2b
  Eigen::VectorXd projected;          // m, before normalization
  double norm = 0.0;
  Embedding output;                   // m, unit norm
};

// Embedding lookup, bidirectional LSTM, additive attention pooling, linear
// projection, L2 normalization. Padding positions never enter the pass.
Embedding encode(const TokenSequence& tokens, const EncoderParams& params,
                 EncodeCache* cache = nullptr);

// Accumulates parameter gradients into grad given dLoss/d(output).
void encode_backward(const EncodeCache& cache, const Embedding& d_output,
                     const EncoderParams& params, EncoderParams& grad);

// Throws std::domain_error for a zero vector.
double cosine_sim(const Embedding& u, const Embedding& v);

// Vocabulary, weights, and sequence length needed to embed raw text.
struct EncoderModel {
  Vocabulary vocab;
  EncoderParams params;
  std::size_t max_len = 64;

  Embedding embed(std::string_view text) const;
  // Attention context vector (2b); the pooled representation used by the
  // sentence pre-screener.
  Eigen::VectorXd pooled(std::string_view text) const;
  std::vector<Embedding> embed_all(const std::vector<std::string>& texts) const;
};

}  // namespace skillmap
