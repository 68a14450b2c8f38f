#include "skillmap/corpus.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "skillmap/util.hpp"

namespace skillmap {

namespace {

constexpr std::array kOpeners = {
    "Candidates should have",        "We are looking for someone with",
    "The role requires",             "You will bring",
    "Applicants must demonstrate",   "Ideal candidates possess",
    "This position calls for",       "Successful hires will show",
    "The team needs a colleague with", "You should offer",
    "We expect",                     "Our department values",
};

constexpr std::array kFragments = {
    "",
    " to support daily operations",
    " for cross-functional projects",
    " in a fast-paced environment",
    " across multiple product lines",
    " when handling client requests",
    " as part of a small team",
    " to deliver quarterly goals",
    " under tight deadlines",
    " in line with company standards",
    " for internal and external stakeholders",
    " with minimal supervision",
    " on a range of assignments",
};

// Trailing predicates for sentences that lead with the skill itself.
constexpr std::array kClosers = {
    " is needed for this job",
    " is an advantage",
    " will matter in this position",
    " is part of the daily work",
    " is expected from day one",
    " helps you succeed here",
};

constexpr std::array kBenefits = {
    "We offer a competitive salary and benefits package",
    "Employees enjoy paid annual leave and regular team events",
    "The company provides social insurance and a housing fund",
    "Free shuttle buses and lunch subsidies are provided",
    "Performance bonuses are paid at the end of each year",
    "Flexible working hours and remote days are available",
};
constexpr std::array kDegrees = {"Bachelor's degree or above", "Master's degree preferred",
                                 "College diploma or higher", "Doctorate holders are welcome"};
constexpr std::array kFields = {"in a related field",     "in economics or management",
                                "in engineering",         "in any discipline",
                                "in finance or accounting", "in computer science"};
constexpr std::array kHeadings = {"Requirements:", "Responsibilities:", "About us:", "What we offer:",
                                  "Job description:"};
constexpr std::array kCities = {"Shanghai", "Beijing", "Shenzhen", "Hangzhou", "Chengdu", "Wuhan"};
constexpr std::array kIndustries = {"logistics", "healthcare", "retail", "manufacturing",
                                    "financial", "energy"};

std::string fmt_record_error(std::size_t line_no, const std::string& why) {
  return "line " + std::to_string(line_no) + ": " + why;
}

}  // namespace

const char* to_string(Level level) {
  switch (level) {
    case Level::beginner: return "beginner";
    case Level::intermediate: return "intermediate";
    case Level::advanced: return "advanced";
  }
  return "?";
}

const char* to_string(Split split) { return split == Split::train ? "train" : "eval"; }

Level parse_level(std::string_view s) {
  if (s == "beginner") return Level::beginner;
  if (s == "intermediate") return Level::intermediate;
  if (s == "advanced") return Level::advanced;
  throw std::invalid_argument("unknown level '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "eval") return Split::eval;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

const char* level_qualifier(Level level) {
  switch (level) {
    case Level::beginner: return "basic familiarity with";
    case Level::intermediate: return "solid working experience in";
    case Level::advanced: return "expert-level command of";
  }
  return "";
}

LoadedPostings load_postings(const std::filesystem::path& path, const CorpusSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  LoadedPostings out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  const auto reject = [&](const std::string& why) {
    ++out.rejected;
    out.reject_reasons.push_back(fmt_record_error(line_no, why));
    spdlog::warn("{}: skipped record at line {}: {}", path.string(), line_no, why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      reject(std::string("not valid JSON: ") + e.what());
      continue;
    }
    JobPosting p;
    try {
      p.posting_id = rec.at("posting_id").get<std::string>();
      p.firm_id = rec.at("firm_id").get<std::string>();
      p.year = rec.at("year").get<int>();
      p.title = rec.at("title").get<std::string>();
      p.body = rec.at("body").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      reject(std::string("bad field: ") + e.what());
      continue;
    }
    if (p.posting_id.empty() || p.firm_id.empty()) {
      reject("empty posting_id or firm_id");
      continue;
    }
    if (p.year < schema.min_year || p.year > schema.max_year) {
      reject("year " + std::to_string(p.year) + " outside window");
      continue;
    }
    if (trim(p.title).empty() || trim(p.body).empty()) {
      reject("empty title or body");
      continue;
    }
    if (!seen.insert(p.posting_id).second) throw DuplicateIdError(p.posting_id);
    out.postings.push_back(std::move(p));
  }
  return out;
}

void write_postings(const std::filesystem::path& path, const std::vector<JobPosting>& postings) {
  std::string out;
  for (const auto& p : postings) {
    nlohmann::ordered_json rec;
    rec["posting_id"] = p.posting_id;
    rec["firm_id"] = p.firm_id;
    rec["year"] = p.year;
    rec["title"] = p.title;
    rec["body"] = p.body;
    out += rec.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<FirmYearControls> load_controls(const std::filesystem::path& path) {
  auto t = read_table(path);
  auto cf = t.column("firm_id"), cy = t.column("year"), ca = t.column("log_assets"),
       cr = t.column("roa"), cl = t.column("leverage"), cd = t.column("rnd_intensity"),
       cw = t.column("ai_flow");
  std::vector<FirmYearControls> rows;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& r : t.rows) {
    FirmYearControls c;
    c.firm_id = r[cf];
    c.year = std::stoi(r[cy]);
    c.log_assets = std::stod(r[ca]);
    c.roa = std::stod(r[cr]);
    c.leverage = std::stod(r[cl]);
    c.rnd_intensity = std::stod(r[cd]);
    c.ai_flow = std::stod(r[cw]);
    if (c.ai_flow < 0) {
      throw std::invalid_argument(path.string() + ": negative ai_flow for firm " + c.firm_id);
    }
    if (!seen.emplace(c.firm_id, c.year).second) {
      throw std::invalid_argument(path.string() + ": duplicate controls for firm " + c.firm_id +
                                  " year " + std::to_string(c.year));
    }
    rows.push_back(std::move(c));
  }
  return rows;
}

void write_controls(const std::filesystem::path& path, const std::vector<FirmYearControls>& rows) {
  Table t{{"firm_id", "year", "log_assets", "roa", "leverage", "rnd_intensity", "ai_flow"}, {}};
  for (const auto& c : rows) {
    t.rows.push_back({c.firm_id, std::to_string(c.year), format_double(c.log_assets),
                      format_double(c.roa), format_double(c.leverage),
                      format_double(c.rnd_intensity), format_double(c.ai_flow)});
  }
  write_table(path, t);
}

Split split_for(std::string_view sentence) {
  return fnv1a64(sentence) % 10 < 8 ? Split::train : Split::eval;
}

std::vector<SyntheticPair> generate_synthetic_pairs(const SkillTaxonomy& taxonomy, int per_level,
                                                    std::uint64_t seed) {
  if (per_level < 1) throw std::invalid_argument("per_level must be >= 1");
  if (taxonomy.empty()) throw std::invalid_argument("taxonomy is empty");
  std::vector<SyntheticPair> pairs;
  pairs.reserve(taxonomy.size() * 3 * static_cast<std::size_t>(per_level));
  for (const auto& skill : taxonomy.skills()) {
    std::unordered_set<std::string> used;
    // Leading clause of the description, used as a paraphrase of the skill.
    auto gloss = trim(split(skill.description, ',').front());
    if (!gloss.empty() && gloss.back() == '.') gloss.pop_back();
    for (Level level : {Level::beginner, Level::intermediate, Level::advanced}) {
      for (int k = 0; k < per_level; ++k) {
        std::string sentence;
        for (int attempt = 0; attempt < 64; ++attempt) {
          std::mt19937_64 rng(derive_seed(seed, {fnv1a64(skill.id), static_cast<std::uint64_t>(level),
                                                 static_cast<std::uint64_t>(k),
                                                 static_cast<std::uint64_t>(attempt)}));
          const auto& opener = kOpeners[rng() % kOpeners.size()];
          const auto& fragment = kFragments[rng() % kFragments.size()];
          const bool with_gloss = rng() % 3 == 0;
          if (rng() % 3 == 0) {
            // Skill-first form: "Solid working experience in X is an advantage."
            std::string lead = level_qualifier(level);
            lead[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(lead[0])));
            sentence = lead + " " + skill.label + kClosers[rng() % kClosers.size()];
          } else {
            sentence = std::string(opener) + " " + level_qualifier(level) + " " + skill.label;
            if (with_gloss) sentence += ", meaning the ability to " + to_lower_ascii(gloss);
            sentence += fragment;
          }
          sentence += ".";
          if (used.insert(sentence).second) break;
        }
        pairs.push_back({sentence, skill.id, level, split_for(sentence)});
      }
    }
  }
  return pairs;
}

std::vector<std::string> generate_boilerplate(std::size_t count, std::uint64_t seed) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(seed, {0xB01Eu, i}));
    std::string s;
    switch (rng() % 7) {
      case 0: s = kBenefits[rng() % kBenefits.size()]; break;
      case 1:
        s = std::string(kDegrees[rng() % kDegrees.size()]) + " " + kFields[rng() % kFields.size()];
        break;
      case 2: s = "At least " + std::to_string(1 + rng() % 8) + " years of relevant work experience"; break;
      case 3:
        s = "Our company is a leading provider of " +
            std::string(kIndustries[rng() % kIndustries.size()]) + " services in " +
            kCities[rng() % kCities.size()];
        break;
      case 5: s = kHeadings[rng() % kHeadings.size()]; break;
      case 6:
        s = "We are hiring for our " + std::string(kIndustries[rng() % kIndustries.size()]) + " team in " +
            kCities[rng() % kCities.size()];
        break;
      default:
        s = "The position is based in " + std::string(kCities[rng() % kCities.size()]) +
            " with " + std::to_string(5 + rng() % 2) + " working days per week";
        break;
    }
    out.push_back(s.back() == ':' ? s : s + ".");
  }
  return out;
}

std::vector<LabeledSentence> build_prescreen_set(const std::vector<SyntheticPair>& pairs,
                                                 std::size_t negatives, std::uint64_t seed) {
  std::vector<LabeledSentence> out;
  for (const auto& p : pairs) {
    if (p.split == Split::train) out.push_back({p.sentence, 1});
  }
  for (auto& s : generate_boilerplate(negatives, seed)) out.push_back({std::move(s), 0});
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<SyntheticPair>& pairs) {
  Table t{{"sentence", "skill_id", "level", "split"}, {}};
  for (const auto& p : pairs) t.rows.push_back({p.sentence, p.skill_id, to_string(p.level), to_string(p.split)});
  write_table(path, t);
}

std::vector<SyntheticPair> read_pairs(const std::filesystem::path& path) {
  auto t = read_table(path);
  auto cs = t.column("sentence"), ci = t.column("skill_id"), cl = t.column("level"),
       cp = t.column("split");
  std::vector<SyntheticPair> out;
  for (const auto& r : t.rows) out.push_back({r[cs], r[ci], parse_level(r[cl]), parse_split(r[cp])});
  return out;
}

void write_labeled(const std::filesystem::path& path, const std::vector<LabeledSentence>& rows) {
  Table t{{"text", "label"}, {}};
  for (const auto& r : rows) t.rows.push_back({r.text, std::to_string(r.label)});
  write_table(path, t);
}

std::vector<LabeledSentence> read_labeled(const std::filesystem::path& path) {
  auto t = read_table(path);
  auto ct = t.column("text"), cl = t.column("label");
  std::vector<LabeledSentence> out;
  for (const auto& r : t.rows) out.push_back({r[ct], std::stoi(r[cl])});
  return out;
}

}  // namespace skillmap
