#include "skillmap/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "skillmap/util.hpp"

namespace skillmap {

std::vector<SkillIndex::Hit> match_sentence(const Embedding& sentence, const SkillIndex& index, double tau,
                                            std::size_t cap) {
  auto hits = index.at_least(sentence, tau);
  if (hits.size() > cap) hits.resize(cap);
  return hits;
}

PostingSkills extract_skills(const JobPosting& posting, const Prescreener& prescreener, const EncoderModel& model,
                             const SkillIndex& index, const ExtractionConfig& config) {
  PostingSkills out;
  out.posting_id = posting.posting_id;
  out.firm_id = posting.firm_id;
  out.year = posting.year;
  const auto sentences = segment_sentences(posting, config.segmentation);
  out.sentences = sentences.size();
  EncodeCache cache;
  for (const auto& s : sentences) {
    // One pass yields both the pooled context and the final embedding.
    const Embedding e = encode(tokenize(s.text, model.vocab, model.max_len), model.params, &cache);
    if (prescreener.probability(cache.context) < 0.5) continue;
    out.kept_sentences.push_back(s.text);
    for (const auto& hit : match_sentence(e, index, config.tau, config.cap)) {
      const auto& id = index.ids()[hit.index];
      out.skills.insert(id);
      out.sources[id].push_back(s.index);
    }
  }
  out.document = model.embed(posting.title + "\n" + posting.body);
  return out;
}

Alignment classify_alignment(const SkillSet& skills, const SkillSet& baseline) {
  Alignment a;
  for (const auto& s : skills) (baseline.count(s) ? a.aligned : a.nonaligned).insert(s);
  return a;
}

void classify_posting(PostingSkills& posting, const BaselineSkillMap& baseline) {
  auto it = baseline.sets.find(posting.occ_id);
  if (it == baseline.sets.end()) {
    posting.error = "no baseline skill set for occupation '" + posting.occ_id + "'";
    posting.aligned.clear();
    posting.nonaligned.clear();
    return;
  }
  auto a = classify_alignment(posting.skills, it->second);
  posting.aligned = std::move(a.aligned);
  posting.nonaligned = std::move(a.nonaligned);
  posting.error.reset();
}

std::map<int, double> ai_stock(const std::map<int, double>& flows, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  std::map<int, double> out;
  if (flows.empty()) return out;
  double stock = 0.0;
  int prev = flows.begin()->first - 1;
  for (const auto& [year, flow] : flows) {
    if (!(flow >= 0.0)) throw std::invalid_argument("negative AI flow in year " + std::to_string(year));
    // Gap years depreciate with zero flow.
    for (int y = prev + 1; y < year; ++y) stock *= 1.0 - delta;
    stock = (1.0 - delta) * stock + flow;
    out[year] = stock;
    prev = year;
  }
  return out;
}

std::map<FirmYear, double> ai_stock(const std::vector<FirmYearControls>& controls, double delta) {
  std::map<std::string, std::map<int, double>> by_firm;
  for (const auto& c : controls) by_firm[c.firm_id][c.year] = c.ai_flow;
  std::map<FirmYear, double> out;
  for (const auto& [firm, flows] : by_firm) {
    for (const auto& [year, stock] : ai_stock(flows, delta)) out[{firm, year}] = stock;
  }
  return out;
}

std::optional<double> text_consistency(const std::vector<Embedding>& documents) {
  const std::size_t n = documents.size();
  if (n < 2) return std::nullopt;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += cosine_sim(documents[i], documents[j]);
  }
  return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

ForwardMeasures forward_measures(const std::vector<const PostingSkills*>& postings, const SkillSet& forward,
                                 IntensityMode mode) {
  ForwardMeasures m;
  if (postings.empty()) return m;
  std::size_t nonaligned = 0, mentions = 0;
  for (const auto* p : postings) {
    nonaligned += p->nonaligned.size();
    for (const auto& s : p->skills) {
      if (!forward.count(s)) continue;
      ++m.count;
      auto src = p->sources.find(s);
      mentions += src == p->sources.end() ? 1 : src->second.size();
    }
  }
  m.share = nonaligned ? static_cast<double>(m.count) / static_cast<double>(nonaligned) : 0.0;
  const double numerator = mode == IntensityMode::sets ? static_cast<double>(m.count) : static_cast<double>(mentions);
  m.intensity = numerator / static_cast<double>(postings.size());
  return m;
}

std::vector<PanelCell> aggregate_panel(const std::vector<PostingSkills>& postings, const PanelInputs& inputs) {
  using Key = std::tuple<std::string, std::string, int>;
  std::map<Key, std::vector<const PostingSkills*>> cells;
  for (const auto& p : postings) {
    if (p.error) continue;
    cells[{p.firm_id, p.occ_id, p.year}].push_back(&p);
  }
  static const SkillSet kEmpty;
  std::vector<PanelCell> out;
  out.reserve(cells.size());
  for (auto& [key, members] : cells) {
    // Canonical order so floating-point sums do not depend on input order.
    std::sort(members.begin(), members.end(),
              [](const PostingSkills* a, const PostingSkills* b) { return a->posting_id < b->posting_id; });
    PanelCell c;
    std::tie(c.firm_id, c.occ_id, c.year) = key;
    c.postings = members.size();
    std::vector<Embedding> docs;
    std::vector<std::string> sentences;
    for (const auto* p : members) {
      c.aligned += p->aligned.size();
      c.nonaligned += p->nonaligned.size();
      if (p->document.size() > 0) docs.push_back(p->document);
      sentences.insert(sentences.end(), p->kept_sentences.begin(), p->kept_sentences.end());
    }
    const SkillSet* forward = &kEmpty;
    if (inputs.forward) {
      if (auto it = inputs.forward->find(c.occ_id); it != inputs.forward->end()) forward = &it->second;
    }
    const auto fm = forward_measures(members, *forward, inputs.intensity);
    c.fl_count = fm.count;
    c.fl_share = fm.share;
    c.fl_intensity = fm.intensity;
    if (docs.size() == members.size()) c.consistency = text_consistency(docs);
    if (inputs.lexicon) {
      const auto scan = scan_ambiguity(sentences, *inputs.lexicon);
      c.ambig_freq = scan.frequency;
      c.ambig_share = scan.share;
    }
    const FirmYear fy{c.firm_id, c.year};
    if (inputs.stocks) {
      if (auto it = inputs.stocks->find(fy); it != inputs.stocks->end()) c.ai_stock = it->second;
    }
    if (inputs.controls) {
      if (auto it = inputs.controls->find(fy); it != inputs.controls->end()) c.controls = it->second;
    }
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

const std::vector<std::string> kPanelHeader = {
    "firm_id", "occ_id",       "year",        "postings",   "aligned",     "nonaligned",
    "fl_count", "fl_share",    "fl_intensity", "consistency", "ambig_freq", "ambig_share",
    "ai_stock", "log_assets",  "roa",         "leverage",   "rnd_intensity"};

std::string optional_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void write_panel(const std::filesystem::path& path, const std::vector<PanelCell>& cells) {
  Table t;
  t.header = kPanelHeader;
  for (const auto& c : cells) {
    std::optional<double> la, roa, lev, rnd;
    if (c.controls) {
      la = c.controls->log_assets;
      roa = c.controls->roa;
      lev = c.controls->leverage;
      rnd = c.controls->rnd_intensity;
    }
    t.rows.push_back({c.firm_id, c.occ_id, std::to_string(c.year), std::to_string(c.postings),
                      std::to_string(c.aligned), std::to_string(c.nonaligned), std::to_string(c.fl_count),
                      format_double(c.fl_share), format_double(c.fl_intensity), optional_field(c.consistency),
                      std::to_string(c.ambig_freq), format_double(c.ambig_share), format_double(c.ai_stock),
                      optional_field(la), optional_field(roa), optional_field(lev), optional_field(rnd)});
  }
  write_table(path, t);
}

std::vector<PanelCell> read_panel(const std::filesystem::path& path) {
  Table t = read_table(path);
  if (t.header != kPanelHeader) throw std::runtime_error(path.string() + ": unexpected panel header");
  std::vector<PanelCell> out;
  for (const auto& r : t.rows) {
    PanelCell c;
    c.firm_id = r[0];
    c.occ_id = r[1];
    c.year = std::stoi(r[2]);
    c.postings = std::stoul(r[3]);
    c.aligned = std::stoul(r[4]);
    c.nonaligned = std::stoul(r[5]);
    c.fl_count = std::stoul(r[6]);
    c.fl_share = std::stod(r[7]);
    c.fl_intensity = std::stod(r[8]);
    c.consistency = parse_optional(r[9]);
    c.ambig_freq = std::stoul(r[10]);
    c.ambig_share = std::stod(r[11]);
    c.ai_stock = std::stod(r[12]);
    if (!r[13].empty()) {
      c.controls = FirmYearControls{c.firm_id, c.year, std::stod(r[13]), std::stod(r[14]), std::stod(r[15]),
                                    std::stod(r[16]), 0.0};
    }
    out.push_back(std::move(c));
  }
  return out;
}

void write_posting_skills(const std::filesystem::path& path, const std::vector<PostingSkills>& postings) {
  Table t;
  t.header = {"posting_id", "firm_id", "year", "occ_id", "sentences", "kept", "aligned", "nonaligned", "error"};
  const auto join = [](const SkillSet& s) {
    std::string out;
    for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
    return out;
  };
  for (const auto& p : postings) {
    t.rows.push_back({p.posting_id, p.firm_id, std::to_string(p.year), p.occ_id, std::to_string(p.sentences),
                      std::to_string(p.kept_sentences.size()), join(p.aligned), join(p.nonaligned),
                      p.error.value_or("")});
  }
  write_table(path, t);
}

}  // namespace skillmap
