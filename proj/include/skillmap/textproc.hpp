#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "skillmap/corpus.hpp"

namespace skillmap {

struct SentenceRecord {
  std::string posting_id;
  std::size_t index = 0;
  std::string text;
  // Byte span of text inside the posting body.
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Maps (text, byte position) to the probability that a sentence ends there.
using BoundaryScorerFn = std::function<double(std::string_view, std::size_t)>;

struct SegmentationConfig {
  // Fragments with fewer code points that do not end in a terminal mark are
  // folded into the preceding sentence.
  std::size_t min_chars = 4;
  // When set, replaces the punctuation rules: boundary iff score >= 0.5.
  BoundaryScorerFn scorer;
};

std::vector<SentenceRecord> segment_sentences(const JobPosting& posting,
                                              const SegmentationConfig& config = {});
std::vector<SentenceRecord> segment_text(std::string_view posting_id, std::string_view body,
                                         const SegmentationConfig& config = {});

// Hashed-feature logistic model over a character window around a candidate
// position. Trained on synthetic boundary labels.
class BoundaryScorer {
 public:
  struct Sample {
    std::string text;
    std::vector<std::size_t> boundaries;  // byte offsets just past each sentence end
  };

  static constexpr std::size_t kBuckets = 1u << 14;

  BoundaryScorer();
  double score(std::string_view text, std::size_t pos) const;
  // Full-batch gradient descent on the cross-entropy over every candidate
  // position of every sample.
  void train(const std::vector<Sample>& samples, int iterations, double learning_rate);
  BoundaryScorerFn as_function() const;

  // Joins generated sentences with mixed separators and records the joins.
  static std::vector<Sample> synthesize(const std::vector<std::string>& sentences,
                                        std::size_t count, std::uint64_t seed);

 private:
  std::vector<std::uint32_t> features(std::string_view text, std::size_t pos) const;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

class AmbiguityLexicon {
 public:
  // Throws on an empty list or duplicate phrases (after normalization).
  explicit AmbiguityLexicon(std::vector<std::string> phrases);
  const std::vector<std::string>& phrases() const { return phrases_; }

 private:
  std::vector<std::string> phrases_;
};

// The five standard vague-requirement phrases plus their Chinese renderings.
AmbiguityLexicon default_lexicon();
// Defaults extended with one phrase per line from the file.
AmbiguityLexicon load_lexicon(const std::filesystem::path& path);

struct AmbiguityScan {
  std::size_t frequency = 0;
  double share = 0.0;
  std::size_t sentences = 0;
  std::size_t matching_sentences = 0;
};

// Case-insensitive substring matching after whitespace collapsing; every
// occurrence counts toward frequency.
AmbiguityScan scan_ambiguity(const std::vector<std::string>& sentences,
                             const AmbiguityLexicon& lexicon);

}  // namespace skillmap
