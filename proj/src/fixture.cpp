#include "skillmap/fixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <map>
#include <set>

#include "skillmap/util.hpp"

namespace skillmap {

namespace {

struct OccupationSpec {
  const char* id;
  const char* title;
  const char* forward_title;  // nullptr keeps the title
  std::vector<const char*> skills;
  std::vector<const char*> forward_skills;  // added in the later version
  const char* context;
};

const std::vector<OccupationSpec>& occupation_specs() {
  static const std::vector<OccupationSpec> specs = {
      {"O01", "Data Scientist", nullptr, {"S01", "S04", "S02", "S03"}, {"S43", "S44"}, "answer business questions"},
      {"O02", "Software Developer", nullptr, {"S11", "S01", "S07", "S12"}, {"S47"}, "ship reliable releases"},
      {"O03", "Database Administrator", nullptr, {"S13", "S02", "S10"}, {}, "keep records available"},
      {"O04", "Network Engineer", nullptr, {"S09", "S10", "S08"}, {}, "keep offices connected"},
      {"O05", "Financial Analyst", nullptr, {"S17", "S05", "S04", "S18"}, {"S43"}, "guide investment choices"},
      {"O06", "Accountant", nullptr, {"S19", "S17", "S20"}, {}, "close the books each month"},
      {"O07", "Supply Chain Manager", nullptr, {"S21", "S22", "S06"}, {"S43"}, "keep shelves stocked"},
      {"O08", "Quality Engineer", nullptr, {"S23", "S24", "S04"}, {"S46"}, "cut defect rates"},
      {"O09", "Mechanical Engineer", nullptr, {"S25", "S27", "S23"}, {}, "bring new machines to market"},
      {"O10", "Electrician", nullptr, {"S26", "S27"}, {}, "keep sites powered"},
      {"O11", "Human Resources Specialist", nullptr, {"S28", "S29", "S30"}, {"S49"}, "staff growing teams"},
      {"O12", "Marketing Manager", nullptr, {"S31", "S34", "S32"}, {"S50"}, "grow market share"},
      {"O13", "Digital Marketing Specialist", nullptr, {"S32", "S33", "S03"}, {"S45"}, "drive online traffic"},
      {"O14", "Graphic Designer", nullptr, {"S35", "S32"}, {"S50"}, "refresh the brand"},
      {"O15", "Sales Representative", nullptr, {"S16", "S15", "S36"}, {}, "meet quarterly targets"},
      {"O16", "Customer Support Agent", "Customer Experience Agent", {"S15", "S38"}, {"S45", "S48"},
       "keep customers satisfied"},
      {"O17", "Project Manager", nullptr, {"S06", "S07", "S37", "S36"}, {}, "deliver projects on time"},
      {"O18", "Compliance Officer", nullptr, {"S39", "S40", "S30"}, {"S49"}, "avoid regulatory penalties"},
      {"O19", "Registered Nurse", nullptr, {"S41", "S42"}, {}, "improve patient outcomes"},
      {"O20", "Technical Writer", nullptr, {"S14", "S38"}, {"S50"}, "help users succeed"},
  };
  return specs;
}

constexpr std::array kTaskTemplates = {
    "Apply {} to {}.",
    "Use {} in order to {}.",
    "Rely on {} to {}.",
};

constexpr std::array kGenericTasks = {
    "Report progress to supervisors every week.",
    "Attend staff meetings and share updates.",
    "Keep work areas tidy and organized.",
};

constexpr std::array kSkillLines = {
    "Hands-on {} is essential for this role.",
    "You will use {} every day.",
    "Strong {} is required.",
    "Proven experience with {} is a must.",
    "The job involves {} for our clients.",
    "Daily duties center on {}.",
};

// Each phrase carries one of the standard vague-requirement expressions.
constexpr std::array kVagueLines = {
    "Familiar with {} is a plus.",
    "Basic understanding of {} is helpful.",
    "Some knowledge of {} is welcome.",
    "Ability to learn {} quickly.",
};

std::string fill(std::string_view pattern, std::string_view a, std::string_view b = {}) {
  std::string out;
  int slot = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{' && i + 1 < pattern.size() && pattern[i + 1] == '}') {
      out += slot++ == 0 ? a : b;
      ++i;
    } else {
      out += pattern[i];
    }
  }
  return out;
}

std::string padded(char prefix, std::size_t n, int width) {
  std::string digits = std::to_string(n);
  return std::string(1, prefix) + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(digits.size()))), '0') + digits;
}

}  // namespace

std::vector<Skill> toy_skills() {
  return {
      {"S01", "python programming", "write and maintain software in the Python language, including scripts and packages"},
      {"S02", "sql querying", "retrieve and combine records from relational databases, using joins and aggregations"},
      {"S03", "data visualization", "present quantitative information in charts and dashboards, for decision makers"},
      {"S04", "statistical analysis", "apply statistical methods to test hypotheses, and summarize data"},
      {"S05", "spreadsheet modelling", "build financial and operational models in spreadsheets, with formulas and pivot tables"},
      {"S06", "project management", "coordinate projects from planning to delivery, within budget and schedule"},
      {"S07", "agile methods", "organize software work in short iterations, using scrum or kanban"},
      {"S08", "cloud infrastructure", "deploy and operate services on public cloud platforms, such as compute and storage"},
      {"S09", "network administration", "configure and monitor computer networks and routers, including firewalls"},
      {"S10", "cybersecurity", "protect systems and data against intrusion, through controls and monitoring"},
      {"S11", "java development", "build applications in the Java language, on the JVM"},
      {"S12", "web frontend development", "create browser interfaces with html and javascript, for end users"},
      {"S13", "database administration", "install and tune database servers, for availability and backups"},
      {"S14", "technical writing", "produce clear documentation for products and processes, for varied audiences"},
      {"S15", "customer service", "resolve customer questions and complaints promptly, by phone or chat"},
      {"S16", "sales negotiation", "close deals on favorable terms with buyers, while keeping relationships"},
      {"S17", "financial reporting", "prepare statements on company financial performance, in line with accounting standards"},
      {"S18", "budgeting", "allocate and track spending against plans, across departments"},
      {"S19", "accounting reconciliation", "match ledger entries against bank and vendor records, to find discrepancies"},
      {"S20", "tax compliance", "file returns and apply tax rules correctly, for companies"},
      {"S21", "supply chain planning", "forecast demand and coordinate suppliers and inventory, across sites"},
      {"S22", "logistics coordination", "schedule shipments and warehouse operations, for on-time delivery"},
      {"S23", "quality assurance", "inspect products and processes against standards, to reduce defects"},
      {"S24", "lean manufacturing", "remove waste from production processes, using continuous improvement"},
      {"S25", "mechanical design", "design machine parts and assemblies with cad software, for manufacture"},
      {"S26", "electrical wiring", "install and repair electrical circuits in buildings, safely"},
      {"S27", "equipment maintenance", "service and repair industrial machinery, on a preventive schedule"},
      {"S28", "recruitment", "attract and hire suitable candidates for open roles, through interviews"},
      {"S29", "employee training", "design and deliver learning programs for staff, in classrooms or online"},
      {"S30", "labor law", "apply employment regulations to workplace decisions, such as contracts"},
      {"S31", "marketing strategy", "define target markets and positioning for products, with campaign plans"},
      {"S32", "social media marketing", "promote brands through social media channels, with engaging content"},
      {"S33", "search engine optimization", "improve website ranking in search results, through content and links"},
      {"S34", "market research", "gather and analyze information about customers and competitors, via surveys"},
      {"S35", "graphic design", "create visual content for print and digital media, with design tools"},
      {"S36", "public speaking", "deliver presentations to audiences with confidence, in meetings and events"},
      {"S37", "team leadership", "guide and motivate a group of employees toward shared goals, by example"},
      {"S38", "business english", "communicate in english in professional settings, in writing and speech"},
      {"S39", "contract management", "draft and monitor agreements with partners, to control risk"},
      {"S40", "risk assessment", "identify and evaluate business risks, and propose mitigation"},
      {"S41", "patient care", "support patients in daily activities and treatment, with empathy"},
      {"S42", "laboratory testing", "perform laboratory tests on samples, following protocols"},
      {"S43", "machine learning", "train predictive models from data, and evaluate their accuracy"},
      {"S44", "deep learning", "build multilayer neural networks, for perception and language tasks"},
      {"S45", "natural language processing", "analyze and generate human language with software, such as text classification"},
      {"S46", "computer vision", "extract information from images and video, with neural networks"},
      {"S47", "model deployment", "ship trained models into production services, and monitor them"},
      {"S48", "data annotation", "label raw data for training learning systems, with guidelines"},
      {"S49", "ai governance", "oversee the responsible use of artificial intelligence, including bias and privacy"},
      {"S50", "prompt engineering", "write instructions that steer large language models, for reliable outputs"},
  };
}

Fixture make_fixture(const FixtureConfig& config) {
  if (config.firms < 2 || config.first_year > config.last_year || config.flow_first_year > config.first_year) {
    throw std::invalid_argument("fixture needs at least 2 firms and an ordered year range");
  }
  Fixture fx;
  fx.skills = toy_skills();
  std::map<std::string, std::string> label_of;
  for (const auto& s : fx.skills) label_of[s.id] = s.label;

  // Occupation taxonomies: one task per skill plus a generic task.
  for (const auto& spec : occupation_specs()) {
    Occupation base{spec.id, spec.title, {}};
    std::size_t k = 0;
    for (const char* s : spec.skills) {
      base.tasks.push_back(fill(kTaskTemplates[k++ % kTaskTemplates.size()], label_of.at(s), spec.context));
    }
    base.tasks.push_back(kGenericTasks[fnv1a64(spec.id) % kGenericTasks.size()]);
    Occupation forward = base;
    if (spec.forward_title) forward.title = spec.forward_title;
    for (const char* s : spec.forward_skills) {
      forward.tasks.push_back(fill(kTaskTemplates[k++ % kTaskTemplates.size()], label_of.at(s), spec.context));
    }
    fx.occupations_base.push_back(std::move(base));
    fx.occupations_forward.push_back(std::move(forward));
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Examiners and their baseline non-AI workload.
  std::vector<double> grant_rate(config.examiners);
  std::size_t app = 0;
  for (std::size_t e = 0; e < config.examiners; ++e) {
    grant_rate[e] = 0.2 + 0.7 * unit(rng);
    for (std::size_t k = 0; k < config.baseline_per_examiner; ++k) {
      const int span = config.baseline_last - config.baseline_first + 1;
      fx.examiner_records.push_back({padded('A', app++, 7), padded('E', e + 1, 3),
                                     padded('F', 1 + rng() % config.firms, 3),
                                     config.baseline_first + static_cast<int>(rng() % static_cast<std::uint64_t>(span)),
                                     false, unit(rng) < grant_rate[e]});
    }
  }

  const auto& specs = occupation_specs();
  std::vector<std::string> all_skill_ids;
  for (const auto& s : fx.skills) all_skill_ids.push_back(s.id);

  for (std::size_t f = 1; f <= config.firms; ++f) {
    const std::string firm = padded('F', f, 3);
    const double ai_propensity = unit(rng) * unit(rng);
    const double size = 8.0 + 1.2 * normal(rng);
    std::set<std::size_t> hires;
    while (hires.size() < 3) hires.insert(rng() % specs.size());
    const std::vector<std::size_t> occs(hires.begin(), hires.end());

    // Each year a firm's applications go mostly to a small, randomly drawn
    // pool of examiners. An early allowance prompts follow-on filings in
    // the same year, and last year's grants add a little to this year's.
    std::vector<std::size_t> pool_examiners(2);
    std::map<int, double> stock_by_year;
    double stock = 0.0;
    std::size_t granted_last = 0;
    for (int year = config.flow_first_year; year <= config.last_year; ++year) {
      for (auto& e : pool_examiners) e = rng() % config.examiners;
      const double mean = 6.0 * ai_propensity * (1.0 + 0.1 * (year - config.flow_first_year)) +
                          0.3 * static_cast<double>(granted_last);
      std::size_t pending = std::poisson_distribution<int>(mean)(rng);
      std::size_t granted_now = 0;
      int n = 0;
      while (pending > 0) {
        std::size_t follow_on = 0;
        for (std::size_t a = 0; a < pending; ++a) {
          const std::size_t e =
              unit(rng) < 0.85 ? pool_examiners[rng() % pool_examiners.size()] : rng() % config.examiners;
          const bool granted = unit(rng) < grant_rate[e];
          if (granted) {
            ++granted_now;
            if (unit(rng) < 0.6) ++follow_on;
          }
          ++n;
          fx.examiner_records.push_back({padded('A', app++, 7), padded('E', e + 1, 3), firm, year, true, granted});
        }
        pending = follow_on;
      }
      granted_last = granted_now;
      stock = 0.85 * stock + n;
      stock_by_year[year] = stock;
      FirmYearControls c;
      c.firm_id = firm;
      c.year = year;
      c.log_assets = size + 0.04 * (year - config.flow_first_year) + 0.1 * normal(rng);
      c.roa = 0.05 + 0.03 * normal(rng);
      c.leverage = 0.2 + 0.5 * unit(rng);
      c.rnd_intensity = std::max(0.0, 0.03 + 0.01 * normal(rng) + 0.02 * ai_propensity);
      c.ai_flow = n;
      fx.controls.push_back(c);
    }

    for (int year = config.first_year; year <= config.last_year; ++year) {
      const int postings = 1 + static_cast<int>(rng() % 2);
      for (int p = 0; p < postings; ++p) {
        const auto& spec = specs[occs[rng() % occs.size()]];
        JobPosting post;
        post.posting_id = firm + "-" + std::to_string(year) + "-" + std::to_string(p + 1);
        post.firm_id = firm;
        post.year = year;
        post.title = (rng() % 10 < 3 ? "Senior " : "") + std::string(spec.title);

        std::vector<std::string> skill_ids;
        std::vector<const char*> pool(spec.skills.begin(), spec.skills.end());
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t aligned = std::min<std::size_t>(pool.size(), 2 + rng() % 2);
        for (std::size_t k = 0; k < aligned; ++k) skill_ids.push_back(pool[k]);
        const double fl_prob = std::min(0.9, 0.1 + 0.03 * stock_by_year[year] + 0.05 * (year - config.first_year));
        if (!spec.forward_skills.empty() && unit(rng) < fl_prob) {
          skill_ids.push_back(spec.forward_skills[rng() % spec.forward_skills.size()]);
        }
        if (unit(rng) < 0.35) {
          const auto& other = all_skill_ids[rng() % all_skill_ids.size()];
          if (std::find(skill_ids.begin(), skill_ids.end(), other) == skill_ids.end()) skill_ids.push_back(other);
        }

        std::vector<std::string> lines;
        for (const auto& id : skill_ids) {
          const bool vague = unit(rng) < 0.2;
          const auto& pattern = vague ? kVagueLines[rng() % kVagueLines.size()] : kSkillLines[rng() % kSkillLines.size()];
          lines.push_back(fill(pattern, label_of.at(id)));
        }
        auto filler = generate_boilerplate(3, derive_seed(config.seed, {f, static_cast<std::uint64_t>(year),
                                                                         static_cast<std::uint64_t>(p)}));
        // Company blurb, then a bulleted requirement list, then benefits.
        std::string body = filler[0] + " We are hiring a " + to_lower_ascii(spec.title) + ".\nRequirements:\n";
        for (const auto& l : lines) body += "- " + l + "\n";
        body += filler[1] + " " + filler[2];
        post.body = std::move(body);
        fx.postings.push_back(std::move(post));
      }
    }
  }
  return fx;
}

void write_fixture(const std::filesystem::path& dir, const Fixture& fx) {
  std::filesystem::create_directories(dir);
  const auto base_year = std::string("2018"), forward_year = std::string("2022");
  write_skill_taxonomies(dir / "skills.tsv",
                         {SkillTaxonomy(base_year, fx.skills), SkillTaxonomy(forward_year, fx.skills)});
  write_occupation_taxonomies(dir / "occupations.tsv", dir / "tasks.tsv",
                              {OccupationTaxonomy(base_year, fx.occupations_base),
                               OccupationTaxonomy(forward_year, fx.occupations_forward)});
  write_postings(dir / "postings.jsonl", fx.postings);
  write_controls(dir / "controls.tsv", fx.controls);
  write_examiner_records(dir / "examiners.tsv", fx.examiner_records);
}

}  // namespace skillmap
