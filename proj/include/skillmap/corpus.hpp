#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillmap/taxonomy_types.hpp"

namespace skillmap {

struct JobPosting {
  std::string posting_id;
  std::string firm_id;
  int year = 0;
  std::string title;
  std::string body;
};

struct FirmYearControls {
  std::string firm_id;
  int year = 0;
  double log_assets = 0.0;
  double roa = 0.0;
  double leverage = 0.0;
  double rnd_intensity = 0.0;
  double ai_flow = 0.0;
};

enum class Level { beginner, intermediate, advanced };
enum class Split { train, eval };

const char* to_string(Level level);
const char* to_string(Split split);
Level parse_level(std::string_view s);
Split parse_split(std::string_view s);

// Qualifier phrase that marks a proficiency level in generated sentences.
const char* level_qualifier(Level level);

struct SyntheticPair {
  std::string sentence;
  std::string skill_id;
  Level level = Level::beginner;
  Split split = Split::train;

  bool operator==(const SyntheticPair&) const = default;
};

struct LabeledSentence {
  std::string text;
  int label = 0;
};

struct CorpusSchema {
  int min_year = 1990;
  int max_year = 2100;
};

class DuplicateIdError : public std::runtime_error {
 public:
  explicit DuplicateIdError(const std::string& id)
      : std::runtime_error("duplicate posting_id '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

struct LoadedPostings {
  std::vector<JobPosting> postings;
  std::size_t rejected = 0;
  std::vector<std::string> reject_reasons;
};

// Reads one JSON object per line. Malformed records are skipped and
// reported; a repeated posting_id throws DuplicateIdError.
LoadedPostings load_postings(const std::filesystem::path& path, const CorpusSchema& schema = {});
void write_postings(const std::filesystem::path& path, const std::vector<JobPosting>& postings);

std::vector<FirmYearControls> load_controls(const std::filesystem::path& path);
void write_controls(const std::filesystem::path& path, const std::vector<FirmYearControls>& rows);

// per_level sentences for every (skill, level), ordered by skill id, level,
// index. Output is a pure function of the arguments.
std::vector<SyntheticPair> generate_synthetic_pairs(const SkillTaxonomy& taxonomy, int per_level,
                                                    std::uint64_t seed);

// 80/20 split on a stable hash of the sentence text.
Split split_for(std::string_view sentence);

// Non-skill sentences: benefits, degree and experience requirements,
// company blurbs.
std::vector<std::string> generate_boilerplate(std::size_t count, std::uint64_t seed);

// Skill sentences are positives, boilerplate negatives.
std::vector<LabeledSentence> build_prescreen_set(const std::vector<SyntheticPair>& pairs,
                                                 std::size_t negatives, std::uint64_t seed);

void write_pairs(const std::filesystem::path& path, const std::vector<SyntheticPair>& pairs);
std::vector<SyntheticPair> read_pairs(const std::filesystem::path& path);
void write_labeled(const std::filesystem::path& path, const std::vector<LabeledSentence>& rows);
std::vector<LabeledSentence> read_labeled(const std::filesystem::path& path);

}  // namespace skillmap
