#include "skillmap/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include "skillmap/util.hpp"

namespace skillmap {

std::vector<std::vector<std::string>> pretokenize(std::string_view text) {
  std::vector<std::vector<std::string>> segments;
  enum class Kind { none, alnum, cjk } kind = Kind::none;
  for (const auto& cp : decode_utf8(text)) {
    char32_t c = cp.value;
    if (is_space(c)) {
      kind = Kind::none;
      continue;
    }
    if (c >= 'A' && c <= 'Z') c = c - 'A' + 'a';
    Kind k = is_ascii_alnum(c) ? Kind::alnum : is_cjk(c) ? Kind::cjk : Kind::none;
    if (k == Kind::none || k != kind) segments.emplace_back();
    segments.back().push_back(encode_utf8(c));
    kind = k;
  }
  return segments;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

void Vocabulary::add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, const VocabConfig& config) {
  std::map<std::string, std::size_t> chars, bigrams;
  for (const auto& t : texts) {
    for (const auto& seg : pretokenize(t)) {
      for (std::size_t i = 0; i < seg.size(); ++i) {
        ++chars[seg[i]];
        if (i + 1 < seg.size()) ++bigrams[seg[i] + seg[i + 1]];
      }
    }
  }
  const auto ranked = [](const std::map<std::string, std::size_t>& counts, std::size_t min_count,
                         std::size_t cap) {
    std::vector<std::pair<std::string, std::size_t>> v;
    for (const auto& [tok, n] : counts) {
      if (n >= min_count) v.emplace_back(tok, n);
    }
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (v.size() > cap) v.resize(cap);
    return v;
  };
  Vocabulary vocab;
  for (const auto& [tok, n] : ranked(chars, 1, chars.size())) vocab.add(tok);
  for (const auto& [tok, n] : ranked(bigrams, config.min_bigram_count, config.max_bigrams)) {
    vocab.add(tok);
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (std::size_t i = 2; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\n';
  }
  write_file(path, out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  Vocabulary vocab;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (vocab.contains(line)) throw std::runtime_error(path.string() + ": duplicate token '" + line + "'");
    vocab.add(line);
  }
  return vocab;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  TokenSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  std::size_t n = 0;
  for (const auto& seg : pretokenize(text)) {
    std::size_t i = 0;
    while (i < seg.size() && n < max_len) {
      if (i + 1 < seg.size()) {
        const std::string bigram = seg[i] + seg[i + 1];
        if (vocab.contains(bigram)) {
          seq.ids[n++] = vocab.id(bigram);
          i += 2;
          continue;
        }
      }
      seq.ids[n++] = vocab.id(seg[i]);
      ++i;
    }
    if (n == max_len) break;
  }
  if (n == 0) {
    seq.ids[0] = Vocabulary::kUnk;
    n = 1;
  }
  seq.length = n;
  return seq;
}

// ---------------------------------------------------------------------------

EncoderParams::EncoderParams(const EncoderDims& dims) : dims_(dims) {
  build_layout();
  data_.assign(layout_.back().offset + layout_.back().rows * layout_.back().cols, 0.0);
}

void EncoderParams::build_layout() {
  const auto& d = dims_;
  const std::size_t g = 4 * d.hidden;
  const std::size_t s = 2 * d.hidden;
  const std::vector<std::pair<const char*, std::pair<std::size_t, std::size_t>>> shapes = {
      {"embedding", {d.vocab, d.input}},
      {"fwd_input", {g, d.input}},       {"fwd_recurrent", {g, d.hidden}}, {"fwd_bias", {g, 1}},
      {"bwd_input", {g, d.input}},       {"bwd_recurrent", {g, d.hidden}}, {"bwd_bias", {g, 1}},
      {"attn_weight", {d.attention, s}}, {"attn_bias", {d.attention, 1}},
      {"attn_vector", {d.attention, 1}},
      {"proj_weight", {d.output, s}},    {"proj_bias", {d.output, 1}},
  };
  layout_.clear();
  std::size_t offset = 0;
  for (const auto& [name, shape] : shapes) {
    layout_.push_back({name, shape.first, shape.second, offset});
    offset += shape.first * shape.second;
  }
}

EncoderParams EncoderParams::random(const EncoderDims& dims, std::uint64_t seed, double scale) {
  EncoderParams p(dims);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& x : p.data_) x = dist(rng);
  return p;
}

void EncoderParams::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

EncoderParams::RowMatrix EncoderParams::embedding() {
  const auto& t = layout_[kEmbedding];
  return RowMatrix(data_.data() + t.offset, static_cast<Eigen::Index>(t.rows),
                   static_cast<Eigen::Index>(t.cols));
}

EncoderParams::ConstRowMatrix EncoderParams::embedding() const {
  const auto& t = layout_[kEmbedding];
  return ConstRowMatrix(data_.data() + t.offset, static_cast<Eigen::Index>(t.rows),
                        static_cast<Eigen::Index>(t.cols));
}

EncoderParams::Matrix EncoderParams::matrix(Tensor t) {
  const auto& i = layout_[t];
  return Matrix(data_.data() + i.offset, static_cast<Eigen::Index>(i.rows),
                static_cast<Eigen::Index>(i.cols));
}

EncoderParams::ConstMatrix EncoderParams::matrix(Tensor t) const {
  const auto& i = layout_[t];
  return ConstMatrix(data_.data() + i.offset, static_cast<Eigen::Index>(i.rows),
                     static_cast<Eigen::Index>(i.cols));
}

EncoderParams::Vector EncoderParams::vector(Tensor t) {
  const auto& i = layout_[t];
  return Vector(data_.data() + i.offset, static_cast<Eigen::Index>(i.rows * i.cols));
}

EncoderParams::ConstVector EncoderParams::vector(Tensor t) const {
  const auto& i = layout_[t];
  return ConstVector(data_.data() + i.offset, static_cast<Eigen::Index>(i.rows * i.cols));
}

void EncoderParams::validate() const {
  if (layout_.size() != kTensorCount) throw ShapeError("params", "uninitialized");
  const auto& d = dims_;
  if (d.vocab < 2) throw ShapeError("embedding", "vocabulary needs pad and unknown rows");
  if (d.input == 0 || d.hidden == 0 || d.attention == 0 || d.output == 0) {
    throw ShapeError("params", "zero dimension");
  }
  const auto& last = layout_.back();
  if (data_.size() != last.offset + last.rows * last.cols) {
    throw ShapeError(last.name, "buffer holds " + std::to_string(data_.size()) + " values");
  }
}

bool EncoderParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

namespace {

constexpr char kMagic[8] = {'S', 'K', 'M', 'A', 'P', 'E', 'N', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("truncated checkpoint reading " + what);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void EncoderParams::save(const std::filesystem::path& path) const {
  validate();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(layout_.size()));
  for (const auto& t : layout_) {
    const std::string name = t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, t.rows);
    put<std::uint64_t>(out, t.cols);
    out.append(reinterpret_cast<const char*>(data_.data() + t.offset), t.rows * t.cols * sizeof(double));
  }
  write_file(path, out);
}

EncoderParams EncoderParams::load(const std::filesystem::path& path) {
  const std::string in = read_file(path);
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + ": not an encoder checkpoint");
  }
  std::size_t pos = sizeof(kMagic);
  if (auto v = take<std::uint32_t>(in, pos, "version"); v != kFormatVersion) {
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  const auto count = take<std::uint32_t>(in, pos, "tensor count");
  if (count != kTensorCount) throw ShapeError("checkpoint", "expected " + std::to_string(kTensorCount) + " tensors");
  std::vector<std::tuple<std::string, std::size_t, std::size_t, std::size_t>> tensors;
  for (std::uint32_t k = 0; k < count; ++k) {
    auto len = take<std::uint32_t>(in, pos, "name length");
    if (pos + len > in.size()) throw std::runtime_error("truncated checkpoint");
    std::string name = in.substr(pos, len);
    pos += len;
    auto rows = take<std::uint64_t>(in, pos, name);
    auto cols = take<std::uint64_t>(in, pos, name);
    if (pos + rows * cols * sizeof(double) > in.size()) throw std::runtime_error("truncated tensor " + name);
    tensors.emplace_back(name, rows, cols, pos);
    pos += rows * cols * sizeof(double);
  }
  EncoderDims dims;
  dims.vocab = std::get<1>(tensors[kEmbedding]);
  dims.input = std::get<2>(tensors[kEmbedding]);
  dims.hidden = std::get<2>(tensors[kFwdRecurrent]);
  dims.attention = std::get<1>(tensors[kAttnWeight]);
  dims.output = std::get<1>(tensors[kProjWeight]);
  EncoderParams p(dims);
  for (std::size_t k = 0; k < kTensorCount; ++k) {
    const auto& [name, rows, cols, at] = tensors[k];
    const auto& expect = p.layout_[k];
    if (name != expect.name || rows != expect.rows || cols != expect.cols) {
      throw ShapeError(name, "checkpoint shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                 " inconsistent with " + expect.name + " " + std::to_string(expect.rows) +
                                 "x" + std::to_string(expect.cols));
    }
    std::memcpy(p.data_.data() + expect.offset, in.data() + at, rows * cols * sizeof(double));
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One LSTM direction over inputs (h x L). reverse walks t = L-1 .. 0; all
// outputs are stored at their original time index.
void lstm_forward(const Eigen::MatrixXd& inputs, const EncoderParams& p, bool reverse,
                  Eigen::MatrixXd& gates, Eigen::MatrixXd& cell, Eigen::MatrixXd& hidden) {
  const auto W = p.matrix(reverse ? EncoderParams::kBwdInput : EncoderParams::kFwdInput);
  const auto U = p.matrix(reverse ? EncoderParams::kBwdRecurrent : EncoderParams::kFwdRecurrent);
  const auto bias = p.vector(reverse ? EncoderParams::kBwdBias : EncoderParams::kFwdBias);
  const Eigen::Index b = static_cast<Eigen::Index>(p.dims().hidden);
  const Eigen::Index L = inputs.cols();
  gates.noalias() = W * inputs;
  gates.colwise() += bias;
  cell.resize(b, L);
  hidden.resize(b, L);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(b);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(b);
  for (Eigen::Index step = 0; step < L; ++step) {
    const Eigen::Index t = reverse ? L - 1 - step : step;
    auto z = gates.col(t);
    if (step > 0) z.noalias() += U * h_prev;
    for (Eigen::Index k = 0; k < b; ++k) {
      z(k) = sigmoid(z(k));
      z(b + k) = sigmoid(z(b + k));
      z(2 * b + k) = std::tanh(z(2 * b + k));
      z(3 * b + k) = sigmoid(z(3 * b + k));
      const double c = z(b + k) * c_prev(k) + z(k) * z(2 * b + k);
      cell(k, t) = c;
      hidden(k, t) = z(3 * b + k) * std::tanh(c);
    }
    h_prev = hidden.col(t);
    c_prev = cell.col(t);
  }
}

void lstm_backward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& gates,
                   const Eigen::MatrixXd& cell, const Eigen::MatrixXd& hidden,
                   const Eigen::MatrixXd& d_hidden, const EncoderParams& p, bool reverse,
                   EncoderParams& grad, Eigen::MatrixXd& d_inputs) {
  const auto W = p.matrix(reverse ? EncoderParams::kBwdInput : EncoderParams::kFwdInput);
  const auto U = p.matrix(reverse ? EncoderParams::kBwdRecurrent : EncoderParams::kFwdRecurrent);
  auto dW = grad.matrix(reverse ? EncoderParams::kBwdInput : EncoderParams::kFwdInput);
  auto dU = grad.matrix(reverse ? EncoderParams::kBwdRecurrent : EncoderParams::kFwdRecurrent);
  auto dbias = grad.vector(reverse ? EncoderParams::kBwdBias : EncoderParams::kFwdBias);
  const Eigen::Index b = static_cast<Eigen::Index>(p.dims().hidden);
  const Eigen::Index L = inputs.cols();

  Eigen::MatrixXd dz(4 * b, L);
  Eigen::MatrixXd h_prev_all = Eigen::MatrixXd::Zero(b, L);
  Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(b);
  Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(b);
  for (Eigen::Index step = L - 1; step >= 0; --step) {
    const Eigen::Index t = reverse ? L - 1 - step : step;
    const bool first = step == 0;
    const Eigen::Index t_prev = reverse ? t + 1 : t - 1;
    if (!first) h_prev_all.col(t) = hidden.col(t_prev);
    for (Eigen::Index k = 0; k < b; ++k) {
      const double i = gates(k, t), f = gates(b + k, t), g = gates(2 * b + k, t),
                   o = gates(3 * b + k, t);
      const double c = cell(k, t);
      const double c_prev = first ? 0.0 : cell(k, t_prev);
      const double tc = std::tanh(c);
      const double dh = d_hidden(k, t) + dh_next(k);
      const double dc = dh * o * (1.0 - tc * tc) + dc_next(k);
      dz(k, t) = dc * g * i * (1.0 - i);
      dz(b + k, t) = dc * c_prev * f * (1.0 - f);
      dz(2 * b + k, t) = dc * i * (1.0 - g * g);
      dz(3 * b + k, t) = dh * tc * o * (1.0 - o);
      dc_next(k) = dc * f;
    }
    dh_next.noalias() = U.transpose() * dz.col(t);
  }
  dW.noalias() += dz * inputs.transpose();
  dU.noalias() += dz * h_prev_all.transpose();
  dbias += dz.rowwise().sum();
  d_inputs.noalias() += W.transpose() * dz;
}

}  // namespace

Embedding encode(const TokenSequence& tokens, const EncoderParams& params, EncodeCache* cache) {
  const auto& d = params.dims();
  const std::size_t L = std::min(tokens.length, tokens.ids.size());
  if (L == 0) throw ShapeError("ids", "empty token sequence");
  EncodeCache local;
  EncodeCache& c = cache ? *cache : local;

  const auto E = params.embedding();
  if (static_cast<std::size_t>(E.cols()) != d.input) throw ShapeError("embedding", "width mismatch");
  c.ids.assign(tokens.ids.begin(), tokens.ids.begin() + static_cast<std::ptrdiff_t>(L));
  c.inputs.resize(static_cast<Eigen::Index>(d.input), static_cast<Eigen::Index>(L));
  for (std::size_t t = 0; t < L; ++t) {
    const int id = c.ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= d.vocab) {
      throw ShapeError("embedding", "token id " + std::to_string(id) + " outside vocabulary of " +
                                        std::to_string(d.vocab));
    }
    c.inputs.col(static_cast<Eigen::Index>(t)) = E.row(id).transpose();
  }

  lstm_forward(c.inputs, params, false, c.fwd_gates, c.fwd_cell, c.fwd_hidden);
  lstm_forward(c.inputs, params, true, c.bwd_gates, c.bwd_cell, c.bwd_hidden);
  const Eigen::Index b = static_cast<Eigen::Index>(d.hidden);
  c.states.resize(2 * b, static_cast<Eigen::Index>(L));
  c.states.topRows(b) = c.fwd_hidden;
  c.states.bottomRows(b) = c.bwd_hidden;

  const auto Wa = params.matrix(EncoderParams::kAttnWeight);
  const auto ba = params.vector(EncoderParams::kAttnBias);
  const auto va = params.vector(EncoderParams::kAttnVector);
  c.attn_hidden.noalias() = Wa * c.states;
  c.attn_hidden.colwise() += ba;
  c.attn_hidden = c.attn_hidden.array().tanh().matrix();
  Eigen::VectorXd scores = c.attn_hidden.transpose() * va;
  const double top = scores.maxCoeff();
  c.alpha = (scores.array() - top).exp().matrix();
  c.alpha /= c.alpha.sum();
  c.context.noalias() = c.states * c.alpha;

  const auto P = params.matrix(EncoderParams::kProjWeight);
  const auto pb = params.vector(EncoderParams::kProjBias);
  c.projected.noalias() = P * c.context;
  c.projected += pb;
  c.norm = c.projected.norm();
  if (!(c.norm > 0.0) || !std::isfinite(c.norm)) {
    throw std::domain_error("encoder produced a zero or non-finite projection");
  }
  c.output = c.projected / c.norm;
  return c.output;
}

void encode_backward(const EncodeCache& c, const Embedding& d_output, const EncoderParams& params,
                     EncoderParams& grad) {
  const auto& d = params.dims();
  const Eigen::Index b = static_cast<Eigen::Index>(d.hidden);

  // Normalization.
  Eigen::VectorXd dy = (d_output - c.output * c.output.dot(d_output)) / c.norm;

  // Projection.
  const auto P = params.matrix(EncoderParams::kProjWeight);
  grad.matrix(EncoderParams::kProjWeight).noalias() += dy * c.context.transpose();
  grad.vector(EncoderParams::kProjBias) += dy;
  Eigen::VectorXd d_context = P.transpose() * dy;

  // Attention pooling.
  Eigen::MatrixXd d_states = d_context * c.alpha.transpose();
  Eigen::VectorXd d_alpha = c.states.transpose() * d_context;
  const double mean = c.alpha.dot(d_alpha);
  Eigen::VectorXd d_scores = c.alpha.array() * (d_alpha.array() - mean);
  const auto Wa = params.matrix(EncoderParams::kAttnWeight);
  const auto va = params.vector(EncoderParams::kAttnVector);
  grad.vector(EncoderParams::kAttnVector).noalias() += c.attn_hidden * d_scores;
  Eigen::MatrixXd d_pre = (va * d_scores.transpose()).array() * (1.0 - c.attn_hidden.array().square());
  grad.matrix(EncoderParams::kAttnWeight).noalias() += d_pre * c.states.transpose();
  grad.vector(EncoderParams::kAttnBias) += d_pre.rowwise().sum();
  d_states.noalias() += Wa.transpose() * d_pre;

  // Recurrent layers.
  Eigen::MatrixXd d_inputs = Eigen::MatrixXd::Zero(c.inputs.rows(), c.inputs.cols());
  lstm_backward(c.inputs, c.fwd_gates, c.fwd_cell, c.fwd_hidden, d_states.topRows(b), params, false,
                grad, d_inputs);
  lstm_backward(c.inputs, c.bwd_gates, c.bwd_cell, c.bwd_hidden, d_states.bottomRows(b), params,
                true, grad, d_inputs);

  // Embedding rows.
  auto dE = grad.embedding();
  for (std::size_t t = 0; t < c.ids.size(); ++t) {
    dE.row(c.ids[t]) += d_inputs.col(static_cast<Eigen::Index>(t)).transpose();
  }
}

double cosine_sim(const Embedding& u, const Embedding& v) {
  if (u.size() != v.size()) throw ShapeError("embedding", "length mismatch in similarity");
  // Same reduction for all three products, so identical inputs give exactly 1.
  const double uu = u.dot(u), vv = v.dot(v);
  if (uu == 0.0 || vv == 0.0) throw std::domain_error("cosine similarity undefined for a zero vector");
  return std::clamp(u.dot(v) / std::sqrt(uu * vv), -1.0, 1.0);
}

Embedding EncoderModel::embed(std::string_view text) const {
  return encode(tokenize(text, vocab, max_len), params);
}

Eigen::VectorXd EncoderModel::pooled(std::string_view text) const {
  EncodeCache cache;
  encode(tokenize(text, vocab, max_len), params, &cache);
  return cache.context;
}

std::vector<Embedding> EncoderModel::embed_all(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

}  // namespace skillmap
