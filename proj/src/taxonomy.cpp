#include "skillmap/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "skillmap/util.hpp"

namespace skillmap {

namespace {

// Top-k selection by descending score, ties by ascending index.
std::vector<SkillIndex::Hit> top_k(const std::vector<SkillIndex::Hit>& pool, std::size_t k) {
  std::vector<SkillIndex::Hit> hits = pool;
  const auto better = [](const SkillIndex::Hit& a, const SkillIndex::Hit& b) {
    return a.score > b.score || (a.score == b.score && a.index < b.index);
  };
  k = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
  hits.resize(k);
  return hits;
}

Eigen::MatrixXd spherical_kmeans(const Eigen::MatrixXd& x, std::size_t k, int iterations,
                                 std::uint64_t seed, std::vector<std::size_t>& assignment) {
  const auto n = static_cast<std::size_t>(x.cols());
  std::mt19937_64 rng(seed);
  // k-means++ seeding on cosine distance.
  Eigen::MatrixXd centroids(x.rows(), static_cast<Eigen::Index>(k));
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    centroids.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(pick));
    Eigen::VectorXd sims = x.transpose() * x.col(static_cast<Eigen::Index>(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], std::max(0.0, 1.0 - sims(static_cast<Eigen::Index>(i))));
      total += dist[i] * dist[i];
    }
    if (total <= 0.0) {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      continue;
    }
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= dist[i] * dist[i];
      if (r <= 0.0) {
        pick = i;
        break;
      }
    }
  }
  assignment.assign(n, 0);
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd sims = centroids.transpose() * x;  // k x n
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best;
      sims.col(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      if (assignment[i] != static_cast<std::size_t>(best)) changed = true;
      assignment[i] = static_cast<std::size_t>(best);
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
      sums.col(static_cast<Eigen::Index>(assignment[i])) += x.col(static_cast<Eigen::Index>(i));
    }
    for (std::size_t c = 0; c < k; ++c) {
      const double norm = sums.col(static_cast<Eigen::Index>(c)).norm();
      if (norm > 0.0) centroids.col(static_cast<Eigen::Index>(c)) = sums.col(static_cast<Eigen::Index>(c)) / norm;
    }
  }
  return centroids;
}

}  // namespace

SkillIndex SkillIndex::build(std::vector<std::string> ids, const std::vector<Embedding>& vectors,
                             const IndexConfig& config) {
  if (ids.empty()) throw std::invalid_argument("cannot index an empty label set");
  if (ids.size() != vectors.size()) throw std::invalid_argument("ids and vectors differ in length");
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (!(ids[i - 1] < ids[i])) throw std::invalid_argument("index ids must be strictly increasing");
  }
  SkillIndex index;
  index.config_ = config;
  index.ids_ = std::move(ids);
  const auto m = vectors.front().size();
  index.vectors_.resize(m, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != m) throw ShapeError("index", "embedding lengths differ");
    const double norm = vectors[i].norm();
    if (norm == 0.0) throw std::domain_error("cannot index a zero vector");
    index.vectors_.col(static_cast<Eigen::Index>(i)) = vectors[i] / norm;
  }
  if (config.mode == IndexMode::approximate) {
    std::size_t k = config.clusters;
    if (k == 0) k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(vectors.size()))));
    k = std::clamp<std::size_t>(k, 1, vectors.size());
    index.centroids_ = spherical_kmeans(index.vectors_, k, config.kmeans_iterations, config.seed,
                                        index.assignment_);
    index.members_.assign(k, {});
    for (std::size_t i = 0; i < index.assignment_.size(); ++i) {
      index.members_[index.assignment_[i]].push_back(i);
    }
  }
  return index;
}

SkillIndex SkillIndex::build(const SkillTaxonomy& taxonomy, const EncoderModel& model,
                             const IndexConfig& config) {
  if (taxonomy.empty()) throw std::invalid_argument("cannot index an empty taxonomy");
  std::vector<std::string> ids;
  std::vector<Embedding> vecs;
  for (const auto& s : taxonomy.skills()) {
    ids.push_back(s.id);
    vecs.push_back(model.embed(SkillTaxonomy::encoder_text(s)));
  }
  return build(std::move(ids), vecs, config);
}

SkillIndex SkillIndex::build_titles(const OccupationTaxonomy& taxonomy, const EncoderModel& model,
                                    const IndexConfig& config) {
  if (taxonomy.empty()) throw std::invalid_argument("cannot index an empty taxonomy");
  std::vector<std::string> ids;
  std::vector<Embedding> vecs;
  for (const auto& o : taxonomy.occupations()) {
    ids.push_back(o.id);
    vecs.push_back(model.embed(o.title));
  }
  return build(std::move(ids), vecs, config);
}

Eigen::VectorXd SkillIndex::scores(const Embedding& query) const {
  if (query.size() != vectors_.rows()) throw ShapeError("query", "embedding length differs from index");
  const double norm = query.norm();
  if (norm == 0.0) throw std::domain_error("cosine similarity undefined for a zero vector");
  Eigen::VectorXd s = vectors_.transpose() * (query / norm);
  return s.cwiseMax(-1.0).cwiseMin(1.0);
}

std::vector<SkillIndex::Hit> SkillIndex::search_exact(const Embedding& query, std::size_t k) const {
  const auto s = scores(query);
  std::vector<Hit> pool(ids_.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = {i, s(static_cast<Eigen::Index>(i))};
  return top_k(pool, k);
}

std::vector<SkillIndex::Hit> SkillIndex::search(const Embedding& query, std::size_t k) const {
  if (config_.mode == IndexMode::exact) return search_exact(query, k);
  if (query.size() != vectors_.rows()) throw ShapeError("query", "embedding length differs from index");
  const double norm = query.norm();
  if (norm == 0.0) throw std::domain_error("cosine similarity undefined for a zero vector");
  const Embedding q = query / norm;
  Eigen::VectorXd cs = centroids_.transpose() * q;
  std::vector<Hit> cluster_pool(static_cast<std::size_t>(cs.size()));
  for (std::size_t c = 0; c < cluster_pool.size(); ++c) cluster_pool[c] = {c, cs(static_cast<Eigen::Index>(c))};
  std::vector<Hit> pool;
  for (const auto& c : top_k(cluster_pool, config_.n_probe)) {
    for (auto i : members_[c.index]) {
      pool.push_back({i, std::clamp(vectors_.col(static_cast<Eigen::Index>(i)).dot(q), -1.0, 1.0)});
    }
  }
  return top_k(pool, k);
}

std::vector<SkillIndex::Hit> SkillIndex::at_least(const Embedding& query, double threshold) const {
  const auto s = scores(query);
  std::vector<Hit> pool;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) >= threshold) pool.push_back({static_cast<std::size_t>(i), s(i)});
  }
  return top_k(pool, pool.size());
}

std::vector<SkillSet> map_tasks_to_skills(const std::vector<Embedding>& task_embeddings,
                                          const SkillIndex& index, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in [0, 1]");
  std::vector<SkillSet> out;
  out.reserve(task_embeddings.size());
  for (const auto& e : task_embeddings) {
    SkillSet s;
    for (const auto& hit : index.at_least(e, tau)) s.insert(index.ids()[hit.index]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SkillSet> map_tasks_to_skills(const Occupation& occupation, const SkillIndex& index,
                                          const EncoderModel& model, double tau) {
  return map_tasks_to_skills(model.embed_all(occupation.tasks), index, tau);
}

BaselineSkillMap build_baseline_sets(const OccupationTaxonomy& occupations, const SkillIndex& index,
                                     const EncoderModel& model, double tau) {
  BaselineSkillMap map;
  map.version = occupations.version();
  map.tau = tau;
  for (const auto& o : occupations.occupations()) {
    SkillSet& b = map.sets[o.id];
    for (auto& s : map_tasks_to_skills(o, index, model, tau)) b.insert(s.begin(), s.end());
  }
  return map;
}

void write_baseline(const std::filesystem::path& path, const BaselineSkillMap& map) {
  Table t{{"version", "tau", "occ_id", "skill_id"}, {}};
  for (const auto& [occ, set] : map.sets) {
    // Occupations with an empty set keep a row so coverage survives a round trip.
    if (set.empty()) t.rows.push_back({map.version, format_double(map.tau), occ, ""});
    for (const auto& s : set) t.rows.push_back({map.version, format_double(map.tau), occ, s});
  }
  write_table(path, t);
}

BaselineSkillMap read_baseline(const std::filesystem::path& path) {
  auto t = read_table(path);
  auto cv = t.column("version"), ct = t.column("tau"), co = t.column("occ_id"), cs = t.column("skill_id");
  BaselineSkillMap map;
  for (const auto& r : t.rows) {
    map.version = r[cv];
    map.tau = std::stod(r[ct]);
    auto& set = map.sets[r[co]];
    if (!r[cs].empty()) set.insert(r[cs]);
  }
  return map;
}

std::string assign_occupation(const Embedding& title, const SkillIndex& titles) {
  auto hits = titles.search_exact(title, 1);
  return titles.ids()[hits.front().index];
}

ForwardLookingSets forward_looking_sets(const BaselineSkillMap& baseline,
                                        const BaselineSkillMap& forward) {
  ForwardLookingSets out;
  std::set<std::string> occs;
  for (const auto& [o, _] : baseline.sets) occs.insert(o);
  for (const auto& [o, _] : forward.sets) occs.insert(o);
  for (const auto& o : occs) {
    auto b = baseline.sets.find(o);
    auto f = forward.sets.find(o);
    if (b == baseline.sets.end()) {
      out.errors[o] = "missing from " + baseline.version + " baseline";
      continue;
    }
    if (f == forward.sets.end()) {
      out.errors[o] = "missing from " + forward.version + " baseline";
      continue;
    }
    SkillSet diff;
    std::set_difference(f->second.begin(), f->second.end(), b->second.begin(), b->second.end(),
                        std::inserter(diff, diff.end()));
    out.sets[o] = std::move(diff);
  }
  return out;
}

StabilityReport occupation_list_stability(const OccupationTaxonomy& a, const OccupationTaxonomy& b) {
  StabilityReport r;
  r.kind = "occupation-list";
  std::set<std::string> ids;
  for (const auto& o : a.occupations()) ids.insert(o.id);
  for (const auto& o : b.occupations()) ids.insert(o.id);
  r.compared = ids.size();
  for (const auto& id : ids) {
    auto ia = a.find(id), ib = b.find(id);
    if (ia && ib && a.occupations()[*ia].title == b.occupations()[*ib].title) ++r.unchanged;
  }
  r.stability = r.compared == 0 ? 1.0 : static_cast<double>(r.unchanged) / static_cast<double>(r.compared);
  return r;
}

StabilityReport task_set_stability(const OccupationTaxonomy& a, const OccupationTaxonomy& b) {
  StabilityReport r;
  r.kind = "task-sets";
  for (const auto& oa : a.occupations()) {
    auto ib = b.find(oa.id);
    if (!ib) continue;
    const auto& ob = b.occupations()[*ib];
    ++r.compared;
    std::set<std::string> ta(oa.tasks.begin(), oa.tasks.end()), tb(ob.tasks.begin(), ob.tasks.end());
    std::vector<std::string> diff;
    std::set_symmetric_difference(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(diff));
    if (diff.empty()) {
      ++r.unchanged;
    } else {
      r.changed_tasks.emplace_back(oa.id, diff.size());
    }
  }
  std::stable_sort(r.changed_tasks.begin(), r.changed_tasks.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  r.stability = r.compared == 0 ? 1.0 : static_cast<double>(r.unchanged) / static_cast<double>(r.compared);
  return r;
}

std::string to_record(const StabilityReport& report) {
  std::ostringstream out;
  out << "kind=" << report.kind << '\n'
      << "stability=" << format_double(report.stability) << '\n'
      << "compared=" << report.compared << '\n'
      << "unchanged=" << report.unchanged << '\n';
  for (const auto& [occ, n] : report.changed_tasks) out << "changed." << occ << '=' << n << '\n';
  return out.str();
}

}  // namespace skillmap
