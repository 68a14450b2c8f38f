#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skillmap/corpus.hpp"
#include "skillmap/econ.hpp"
#include "skillmap/encoder.hpp"
#include "skillmap/taxonomy.hpp"
#include "skillmap/textproc.hpp"
#include "skillmap/trainer.hpp"

namespace skillmap {

struct ExtractionConfig {
  double tau = 0.6;
  std::size_t cap = 5;  // skills kept per sentence
  SegmentationConfig segmentation;
};

// Skills found in one posting. skills is a set; sources keeps the sentence
// indices that produced each skill.
struct PostingSkills {
  std::string posting_id;
  std::string firm_id;
  int year = 0;
  std::string occ_id;
  SkillSet skills;
  std::map<std::string, std::vector<std::size_t>> sources;
  std::vector<std::string> kept_sentences;  // passed the pre-screener
  std::size_t sentences = 0;                // after segmentation
  SkillSet aligned;
  SkillSet nonaligned;
  std::optional<std::string> error;  // alignment could not be classified
  Embedding document;                // title + body, for consistency
};

// Per-sentence step: skills with score >= tau, best cap by descending score,
// ties by ascending id.
std::vector<SkillIndex::Hit> match_sentence(const Embedding& sentence, const SkillIndex& index, double tau,
                                            std::size_t cap);

// Segment, pre-screen, match. Alignment fields stay empty.
PostingSkills extract_skills(const JobPosting& posting, const Prescreener& prescreener, const EncoderModel& model,
                             const SkillIndex& index, const ExtractionConfig& config = {});

struct Alignment {
  SkillSet aligned;
  SkillSet nonaligned;
};
Alignment classify_alignment(const SkillSet& skills, const SkillSet& baseline);
// Looks up B_o for the posting's occupation; a missing set is recorded in
// posting.error and leaves both partitions empty.
void classify_posting(PostingSkills& posting, const BaselineSkillMap& baseline);

// Perpetual inventory in year order starting from zero. Years missing
// between observed ones contribute no flow.
std::map<int, double> ai_stock(const std::map<int, double>& flows, double delta);
std::map<FirmYear, double> ai_stock(const std::vector<FirmYearControls>& controls, double delta);

// Mean pairwise cosine similarity; empty below two postings.
std::optional<double> text_consistency(const std::vector<Embedding>& documents);

enum class IntensityMode { sets, mentions };

struct ForwardMeasures {
  std::size_t count = 0;
  double share = 0.0;
  double intensity = 0.0;
};

struct PanelCell {
  std::string firm_id;
  std::string occ_id;
  int year = 0;
  std::size_t postings = 0;
  std::size_t aligned = 0;
  std::size_t nonaligned = 0;
  std::size_t fl_count = 0;
  double fl_share = 0.0;
  double fl_intensity = 0.0;
  std::optional<double> consistency;
  std::size_t ambig_freq = 0;
  double ambig_share = 0.0;
  double ai_stock = 0.0;
  std::optional<FirmYearControls> controls;
};

// Computes the three forward-looking measures for postings of one cell.
ForwardMeasures forward_measures(const std::vector<const PostingSkills*>& postings, const SkillSet& forward,
                                 IntensityMode mode = IntensityMode::sets);

struct PanelInputs {
  const std::map<std::string, SkillSet>* forward = nullptr;  // F_o by occupation
  const std::map<FirmYear, double>* stocks = nullptr;
  const std::map<FirmYear, FirmYearControls>* controls = nullptr;
  const AmbiguityLexicon* lexicon = nullptr;
  IntensityMode intensity = IntensityMode::sets;
};

// One cell per observed (firm, occupation, year), sorted by key. Postings
// with an alignment error are left out.
std::vector<PanelCell> aggregate_panel(const std::vector<PostingSkills>& postings, const PanelInputs& inputs);

void write_panel(const std::filesystem::path& path, const std::vector<PanelCell>& cells);
std::vector<PanelCell> read_panel(const std::filesystem::path& path);

void write_posting_skills(const std::filesystem::path& path, const std::vector<PostingSkills>& postings);

}  // namespace skillmap
