#include "skillmap/taxonomy_types.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "skillmap/util.hpp"

namespace skillmap {

SkillTaxonomy::SkillTaxonomy(std::string version, std::vector<Skill> skills)
    : version_(std::move(version)), skills_(std::move(skills)) {
  std::sort(skills_.begin(), skills_.end(),
            [](const Skill& a, const Skill& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < skills_.size(); ++i) {
    const auto& s = skills_[i];
    if (s.id.empty()) throw std::invalid_argument("skill with empty id");
    if (trim(s.description).empty()) {
      throw std::invalid_argument("skill '" + s.id + "' has an empty description");
    }
    if (!by_id_.emplace(s.id, i).second) {
      throw std::invalid_argument("duplicate skill id '" + s.id + "'");
    }
  }
}

std::optional<std::size_t> SkillTaxonomy::find(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

OccupationTaxonomy::OccupationTaxonomy(std::string version, std::vector<Occupation> occupations)
    : version_(std::move(version)), occupations_(std::move(occupations)) {
  std::sort(occupations_.begin(), occupations_.end(),
            [](const Occupation& a, const Occupation& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < occupations_.size(); ++i) {
    const auto& o = occupations_[i];
    if (o.tasks.empty()) throw std::invalid_argument("occupation '" + o.id + "' has no tasks");
    if (!by_id_.emplace(o.id, i).second) {
      throw std::invalid_argument("duplicate occupation id '" + o.id + "'");
    }
  }
}

std::optional<std::size_t> OccupationTaxonomy::find(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

SkillTaxonomy load_skill_taxonomy(const std::filesystem::path& path, const std::string& version) {
  auto t = read_table(path);
  auto cv = t.column("version"), ci = t.column("skill_id"), cl = t.column("label"),
       cd = t.column("description");
  std::vector<Skill> skills;
  for (const auto& r : t.rows) {
    if (r[cv] != version) continue;
    skills.push_back({r[ci], r[cl], r[cd]});
  }
  if (skills.empty()) {
    throw std::runtime_error(path.string() + ": no skills for version '" + version + "'");
  }
  return SkillTaxonomy(version, std::move(skills));
}

OccupationTaxonomy load_occupation_taxonomy(const std::filesystem::path& occupations,
                                            const std::filesystem::path& tasks,
                                            const std::string& version) {
  auto ot = read_table(occupations);
  auto tt = read_table(tasks);
  std::map<std::string, Occupation> occs;
  {
    auto cv = ot.column("version"), ci = ot.column("occ_id"), ctitle = ot.column("title");
    for (const auto& r : ot.rows) {
      if (r[cv] != version) continue;
      if (occs.count(r[ci])) throw std::invalid_argument("duplicate occupation id '" + r[ci] + "'");
      occs[r[ci]] = Occupation{r[ci], r[ctitle], {}};
    }
  }
  auto cv = tt.column("version"), ci = tt.column("occ_id"), ctext = tt.column("task_text");
  for (const auto& r : tt.rows) {
    if (r[cv] != version) continue;
    auto it = occs.find(r[ci]);
    if (it == occs.end()) {
      throw std::runtime_error(tasks.string() + ": task for unknown occupation '" + r[ci] + "'");
    }
    it->second.tasks.push_back(r[ctext]);
  }
  if (occs.empty()) {
    throw std::runtime_error(occupations.string() + ": no occupations for version '" + version +
                             "'");
  }
  std::vector<Occupation> list;
  for (auto& [id, o] : occs) list.push_back(std::move(o));
  return OccupationTaxonomy(version, std::move(list));
}

void write_skill_taxonomies(const std::filesystem::path& path,
                            const std::vector<SkillTaxonomy>& versions) {
  Table t{{"version", "skill_id", "label", "description"}, {}};
  for (const auto& v : versions) {
    for (const auto& s : v.skills()) t.rows.push_back({v.version(), s.id, s.label, s.description});
  }
  write_table(path, t);
}

void write_occupation_taxonomies(const std::filesystem::path& occupations,
                                 const std::filesystem::path& tasks,
                                 const std::vector<OccupationTaxonomy>& versions) {
  Table ot{{"version", "occ_id", "title"}, {}};
  Table tt{{"version", "occ_id", "task_text"}, {}};
  for (const auto& v : versions) {
    for (const auto& o : v.occupations()) {
      ot.rows.push_back({v.version(), o.id, o.title});
      for (const auto& task : o.tasks) tt.rows.push_back({v.version(), o.id, task});
    }
  }
  write_table(occupations, ot);
  write_table(tasks, tt);
}

}  // namespace skillmap
