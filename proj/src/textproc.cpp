#include "skillmap/textproc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "skillmap/util.hpp"

namespace skillmap {

namespace {

bool is_terminal(char32_t cp) {
  switch (cp) {
    case '.': case '!': case '?': case ';':
    case U'。': case U'！': case U'？': case U'；':
      return true;
    default:
      return false;
  }
}

bool is_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

// Length in code points of a list bullet starting at cps[i], or 0.
std::size_t bullet_length(const std::vector<CodePoint>& cps, std::size_t i) {
  const std::size_t n = cps.size();
  const auto followed_by_gap = [&](std::size_t k) { return k >= n || !is_terminal(cps[k].value); };
  char32_t c = cps[i].value;
  if (c == U'•' || c == U'·' || c == U'▪' || c == U'●' || c == U'◦') return 1;
  if ((c == '-' || c == '*' || c == U'–') && i + 1 < n && is_space(cps[i + 1].value)) return 1;
  std::size_t k = i;
  if (c == '(' || c == U'（') ++k;
  std::size_t digits = 0;
  while (k < n && is_digit(cps[k].value) && digits < 3) {
    ++k;
    ++digits;
  }
  if (digits == 0 || k >= n) return 0;
  char32_t close = cps[k].value;
  if (c == '(' || c == U'（') {
    if (close == ')' || close == U'）') return k - i + 1;
    return 0;
  }
  if ((close == '.' || close == ')' || close == U'、' || close == U'．') && followed_by_gap(k + 1)) {
    // "3.5" is a number, not a bullet.
    if (close == '.' && k + 1 < n && is_digit(cps[k + 1].value)) return 0;
    return k - i + 1;
  }
  return 0;
}

}  // namespace

std::vector<SentenceRecord> segment_text(std::string_view posting_id, std::string_view body,
                                         const SegmentationConfig& config) {
  const auto cps = decode_utf8(body);
  const std::size_t n = cps.size();
  std::vector<SentenceRecord> out;
  if (n == 0) return out;

  std::vector<bool> separator(n, false);
  std::vector<bool> boundary_after(n, false);
  bool line_start = true;
  for (std::size_t i = 0; i < n; ++i) {
    const char32_t c = cps[i].value;
    if (is_space(c)) {
      separator[i] = true;
      if (c == '\n') line_start = true;
      continue;
    }
    if (line_start) {
      line_start = false;
      if (auto len = bullet_length(cps, i); len > 0) {
        for (std::size_t k = i; k < i + len; ++k) separator[k] = true;
        if (i > 0) boundary_after[i - 1] = true;
        i += len - 1;
        continue;
      }
    }
  }

  if (config.scorer) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      boundary_after[i] = config.scorer(body, cps[i].end) >= 0.5;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const char32_t c = cps[i].value;
      if (c == '\n') {
        boundary_after[i] = true;
        continue;
      }
      if (separator[i] || !is_terminal(c)) continue;
      const bool has_next = i + 1 < n;
      if (has_next && is_terminal(cps[i + 1].value)) continue;  // "?!" and "..." end together
      if (c == '.' && has_next) {
        const char32_t next = cps[i + 1].value;
        if (!is_space(next) && !is_cjk(next)) continue;
      }
      boundary_after[i] = true;
    }
  }

  std::size_t start = 0;
  const auto flush = [&](std::size_t last) {
    std::size_t lo = start, hi = last + 1;
    start = last + 1;
    while (lo < hi && separator[lo]) ++lo;
    while (hi > lo && separator[hi - 1]) --hi;
    if (lo == hi) return;
    std::size_t visible = 0;
    for (std::size_t k = lo; k < hi; ++k) visible += is_space(cps[k].value) ? 0 : 1;
    const bool short_tail = visible < config.min_chars && !is_terminal(cps[hi - 1].value);
    if (short_tail && !out.empty()) {
      auto& prev = out.back();
      prev.end = cps[hi - 1].end;
      prev.text = std::string(body.substr(prev.begin, prev.end - prev.begin));
      return;
    }
    SentenceRecord r;
    r.posting_id = std::string(posting_id);
    r.index = out.size();
    r.begin = cps[lo].begin;
    r.end = cps[hi - 1].end;
    r.text = std::string(body.substr(r.begin, r.end - r.begin));
    out.push_back(std::move(r));
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (boundary_after[i]) flush(i);
  }
  if (start < n) flush(n - 1);
  return out;
}

std::vector<SentenceRecord> segment_sentences(const JobPosting& posting,
                                              const SegmentationConfig& config) {
  return segment_text(posting.posting_id, posting.body, config);
}

// ---------------------------------------------------------------------------

namespace {

// Coarse character class for boundary features.
std::uint32_t char_class(char32_t c) {
  if (c == 0) return 0;
  if (c == '\n') return 1;
  if (is_space(c)) return 2;
  if (is_terminal(c)) return 3;
  if (c == ',' || c == U'，' || c == U'、' || c == ':' || c == U'：') return 4;
  if (c >= 'A' && c <= 'Z') return 5;
  if (c >= 'a' && c <= 'z') return 6;
  if (is_digit(c)) return 7;
  if (is_cjk(c)) return 8;
  return 9;
}

}  // namespace

BoundaryScorer::BoundaryScorer() : weights_(kBuckets, 0.0) {}

std::vector<std::uint32_t> BoundaryScorer::features(std::string_view text, std::size_t pos) const {
  // Window of two code points on each side of pos.
  std::array<char32_t, 4> w{0, 0, 0, 0};
  {
    const std::size_t lo = pos >= 8 ? pos - 8 : 0;
    auto before = decode_utf8(text.substr(lo, pos - lo));
    auto after = decode_utf8(text.substr(pos, std::min<std::size_t>(8, text.size() - pos)));
    if (before.size() >= 2) w[0] = before[before.size() - 2].value;
    if (!before.empty()) w[1] = before.back().value;
    if (!after.empty()) w[2] = after[0].value;
    if (after.size() >= 2) w[3] = after[1].value;
  }
  std::vector<std::uint32_t> f;
  const auto add = [&](std::uint64_t tag, std::uint64_t a, std::uint64_t b = 0) {
    f.push_back(static_cast<std::uint32_t>(derive_seed(tag, {a, b}) % kBuckets));
  };
  for (std::size_t k = 0; k < 4; ++k) {
    add(10 + k, char_class(w[k]));
    if (char_class(w[k]) == 3 || char_class(w[k]) == 4) add(20 + k, w[k]);
  }
  add(30, char_class(w[1]), char_class(w[2]));
  add(31, char_class(w[0]) * 16 + char_class(w[1]), char_class(w[2]) * 16 + char_class(w[3]));
  add(32, w[1], char_class(w[2]));
  return f;
}

double BoundaryScorer::score(std::string_view text, std::size_t pos) const {
  double z = bias_;
  for (auto b : features(text, pos)) z += weights_[b];
  return 1.0 / (1.0 + std::exp(-z));
}

void BoundaryScorer::train(const std::vector<Sample>& samples, int iterations,
                           double learning_rate) {
  struct Row {
    std::vector<std::uint32_t> f;
    double y;
  };
  std::vector<Row> rows;
  for (const auto& s : samples) {
    std::unordered_set<std::size_t> gold(s.boundaries.begin(), s.boundaries.end());
    auto cps = decode_utf8(s.text);
    for (std::size_t i = 0; i + 1 < cps.size(); ++i) {
      rows.push_back({features(s.text, cps[i].end), gold.count(cps[i].end) ? 1.0 : 0.0});
    }
  }
  if (rows.empty()) return;
  std::vector<double> grad(kBuckets);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (int it = 0; it < iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (const auto& r : rows) {
      double z = bias_;
      for (auto b : r.f) z += weights_[b];
      double err = 1.0 / (1.0 + std::exp(-z)) - r.y;
      gb += err;
      for (auto b : r.f) grad[b] += err;
    }
    bias_ -= learning_rate * gb * inv;
    for (std::size_t b = 0; b < kBuckets; ++b) weights_[b] -= learning_rate * grad[b] * inv;
  }
}

BoundaryScorerFn BoundaryScorer::as_function() const {
  return [self = *this](std::string_view text, std::size_t pos) { return self.score(text, pos); };
}

std::vector<BoundaryScorer::Sample> BoundaryScorer::synthesize(
    const std::vector<std::string>& sentences, std::size_t count, std::uint64_t seed) {
  if (sentences.empty()) throw std::invalid_argument("no sentences to synthesize from");
  static const std::array<std::string, 5> kSeparators = {" ", "\n", "  ", "\n\n", " "};
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(seed, {0x5E6u, i}));
    Sample s;
    const std::size_t parts = 2 + rng() % 4;
    for (std::size_t k = 0; k < parts; ++k) {
      std::string sentence = sentences[rng() % sentences.size()];
      // Vary the terminal mark so the model sees all of them.
      if (!sentence.empty() && sentence.back() == '.') {
        static const std::array<std::string, 4> kMarks = {".", ";", "!", "."};
        sentence.pop_back();
        sentence += kMarks[rng() % kMarks.size()];
      }
      s.text += sentence;
      s.boundaries.push_back(s.text.size());
      if (k + 1 < parts) s.text += kSeparators[rng() % kSeparators.size()];
    }
    s.boundaries.pop_back();  // the end of text is not a candidate position
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

AmbiguityLexicon::AmbiguityLexicon(std::vector<std::string> phrases) {
  if (phrases.empty()) throw std::invalid_argument("ambiguity lexicon is empty");
  std::unordered_set<std::string> seen;
  for (auto& p : phrases) {
    auto norm = normalize_text(p);
    if (norm.empty()) throw std::invalid_argument("ambiguity lexicon contains an empty phrase");
    if (!seen.insert(norm).second) {
      throw std::invalid_argument("duplicate ambiguity phrase '" + norm + "'");
    }
    phrases_.push_back(std::move(norm));
  }
}

AmbiguityLexicon default_lexicon() {
  return AmbiguityLexicon({"familiar with", "basic understanding of", "some knowledge of",
                           "experience preferred", "ability to learn", "熟悉", "基本了解",
                           "有一定了解", "有经验者优先", "学习能力"});
}

AmbiguityLexicon load_lexicon(const std::filesystem::path& path) {
  std::vector<std::string> phrases = default_lexicon().phrases();
  std::unordered_set<std::string> have(phrases.begin(), phrases.end());
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    auto norm = normalize_text(line);
    if (norm.empty() || have.count(norm)) continue;
    have.insert(norm);
    phrases.push_back(norm);
  }
  return AmbiguityLexicon(std::move(phrases));
}

AmbiguityScan scan_ambiguity(const std::vector<std::string>& sentences,
                             const AmbiguityLexicon& lexicon) {
  AmbiguityScan scan;
  scan.sentences = sentences.size();
  for (const auto& s : sentences) {
    const auto norm = normalize_text(s);
    std::size_t hits = 0;
    for (const auto& phrase : lexicon.phrases()) {
      for (auto pos = norm.find(phrase); pos != std::string::npos;
           pos = norm.find(phrase, pos + phrase.size())) {
        ++hits;
      }
    }
    scan.frequency += hits;
    if (hits > 0) ++scan.matching_sentences;
  }
  scan.share = scan.sentences == 0
                   ? 0.0
                   : static_cast<double>(scan.matching_sentences) / static_cast<double>(scan.sentences);
  return scan;
}

}  // namespace skillmap
