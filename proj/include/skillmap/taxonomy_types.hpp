#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace skillmap {

struct Skill {
  std::string id;
  std::string label;
  std::string description;
};

// Versioned skill label space, sorted by id.
class SkillTaxonomy {
 public:
  SkillTaxonomy() = default;
  // Validates unique ids and non-empty descriptions.
  SkillTaxonomy(std::string version, std::vector<Skill> skills);

  const std::string& version() const { return version_; }
  const std::vector<Skill>& skills() const { return skills_; }
  std::size_t size() const { return skills_.size(); }
  bool empty() const { return skills_.empty(); }
  std::optional<std::size_t> find(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id).has_value(); }

  // Text the encoder sees for a skill: label first, then description.
  static std::string encoder_text(const Skill& s) { return s.label + ": " + s.description; }

 private:
  std::string version_;
  std::vector<Skill> skills_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct Occupation {
  std::string id;
  std::string title;
  std::vector<std::string> tasks;
};

class OccupationTaxonomy {
 public:
  OccupationTaxonomy() = default;
  // Validates unique ids and at least one task per occupation.
  OccupationTaxonomy(std::string version, std::vector<Occupation> occupations);

  const std::string& version() const { return version_; }
  const std::vector<Occupation>& occupations() const { return occupations_; }
  std::size_t size() const { return occupations_.size(); }
  bool empty() const { return occupations_.empty(); }
  std::optional<std::size_t> find(const std::string& id) const;

 private:
  std::string version_;
  std::vector<Occupation> occupations_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Skills table columns: version, skill_id, label, description.
SkillTaxonomy load_skill_taxonomy(const std::filesystem::path& path, const std::string& version);
// Occupations table: version, occ_id, title. Tasks table: version, occ_id, task_text.
OccupationTaxonomy load_occupation_taxonomy(const std::filesystem::path& occupations,
                                            const std::filesystem::path& tasks,
                                            const std::string& version);

void write_skill_taxonomies(const std::filesystem::path& path,
                            const std::vector<SkillTaxonomy>& versions);
void write_occupation_taxonomies(const std::filesystem::path& occupations,
                                 const std::filesystem::path& tasks,
                                 const std::vector<OccupationTaxonomy>& versions);

}  // namespace skillmap
