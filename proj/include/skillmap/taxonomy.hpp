#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "skillmap/encoder.hpp"
#include "skillmap/taxonomy_types.hpp"

namespace skillmap {

enum class IndexMode { exact, approximate };

struct IndexConfig {
  IndexMode mode = IndexMode::exact;
  // Coarse partitions for approximate search; 0 picks round(sqrt(K)).
  std::size_t clusters = 0;
  std::size_t n_probe = 8;
  int kmeans_iterations = 20;
  std::uint64_t seed = 17;
};

// Immutable matrix of unit-norm label embeddings keyed by id, ordered by id.
// Approximate mode adds a spherical k-means partition and probes the
// n_probe clusters whose centroids score highest.
class SkillIndex {
 public:
  struct Hit {
    std::size_t index;
    double score;
  };

  SkillIndex() = default;
  // ids must be strictly increasing; vectors are normalized on the way in.
  static SkillIndex build(std::vector<std::string> ids, const std::vector<Embedding>& vectors,
                          const IndexConfig& config = {});
  static SkillIndex build(const SkillTaxonomy& taxonomy, const EncoderModel& model,
                          const IndexConfig& config = {});
  // Keyed by occupation id, embedding titles only.
  static SkillIndex build_titles(const OccupationTaxonomy& taxonomy, const EncoderModel& model,
                                 const IndexConfig& config = {});

  std::size_t size() const { return ids_.size(); }
  IndexMode mode() const { return config_.mode; }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  const std::vector<std::size_t>& assignment() const { return assignment_; }

  // Similarity to every label, in index order.
  Eigen::VectorXd scores(const Embedding& query) const;
  // Top k by descending score, ties by ascending id; honors the index mode.
  std::vector<Hit> search(const Embedding& query, std::size_t k) const;
  std::vector<Hit> search_exact(const Embedding& query, std::size_t k) const;
  // Every label with score >= threshold, by descending score.
  std::vector<Hit> at_least(const Embedding& query, double threshold) const;

 private:
  IndexConfig config_;
  std::vector<std::string> ids_;
  Eigen::MatrixXd vectors_;    // m x K
  Eigen::MatrixXd centroids_;  // m x C
  std::vector<std::size_t> assignment_;
  std::vector<std::vector<std::size_t>> members_;
};

using SkillSet = std::set<std::string>;

// S_t for each task: skills with similarity >= tau (inclusive).
std::vector<SkillSet> map_tasks_to_skills(const std::vector<Embedding>& task_embeddings,
                                          const SkillIndex& index, double tau);
std::vector<SkillSet> map_tasks_to_skills(const Occupation& occupation, const SkillIndex& index,
                                          const EncoderModel& model, double tau);

struct BaselineSkillMap {
  std::string version;
  double tau = 0.6;
  std::map<std::string, SkillSet> sets;  // occupation id -> B_o
};

// B_o as the union of S_t over the occupation's tasks.
BaselineSkillMap build_baseline_sets(const OccupationTaxonomy& occupations, const SkillIndex& index,
                                     const EncoderModel& model, double tau);
void write_baseline(const std::filesystem::path& path, const BaselineSkillMap& map);
BaselineSkillMap read_baseline(const std::filesystem::path& path);

// Highest title similarity; ties go to the lowest occupation id.
std::string assign_occupation(const Embedding& title, const SkillIndex& titles);

struct ForwardLookingSets {
  std::map<std::string, SkillSet> sets;
  std::map<std::string, std::string> errors;  // occupation id -> reason
};

// F_o = B_o(forward) \ B_o(baseline), over the union of occupation ids.
ForwardLookingSets forward_looking_sets(const BaselineSkillMap& baseline,
                                        const BaselineSkillMap& forward);

struct StabilityReport {
  std::string kind;
  double stability = 1.0;
  std::size_t compared = 0;
  std::size_t unchanged = 0;
  // Task-set mode: changed-task counts (symmetric difference) for every
  // changed occupation, largest first.
  std::vector<std::pair<std::string, std::size_t>> changed_tasks;
};

// Share of occupation ids (over the union) present in both versions with an
// identical title.
StabilityReport occupation_list_stability(const OccupationTaxonomy& a, const OccupationTaxonomy& b);
// Over ids present in both versions: share with identical task text sets.
StabilityReport task_set_stability(const OccupationTaxonomy& a, const OccupationTaxonomy& b);
std::string to_record(const StabilityReport& report);

}  // namespace skillmap
