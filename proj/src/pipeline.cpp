#include "skillmap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "skillmap/econ.hpp"
#include "skillmap/textproc.hpp"
#include "skillmap/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace skillmap {

namespace {

constexpr std::array<std::pair<Stage, const char*>, 8> kStageNames = {{
    {Stage::gen_data, "gen-data"},
    {Stage::train, "train"},
    {Stage::map_taxonomy, "map-taxonomy"},
    {Stage::extract, "extract"},
    {Stage::panel, "panel"},
    {Stage::estimate, "estimate"},
    {Stage::stability, "stability"},
    {Stage::all, "all"},
}};

}  // namespace

const char* to_string(Stage stage) {
  for (const auto& [s, name] : kStageNames) {
    if (s == stage) return name;
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (const auto& [s, n] : kStageNames) {
    if (name == n) return s;
  }
  throw ConfigError("stage", "unknown stage '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

using Ptree = boost::property_tree::ptree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"paths", {"skills", "occupations", "tasks", "postings", "controls", "examiners", "lexicon", "out_dir",
                 "base_version", "forward_version"}},
      {"run", {"seed"}},
      {"data", {"per_level", "boilerplate"}},
      {"model", {"input", "hidden", "attention", "output", "max_len", "min_bigram_count", "max_bigrams"}},
      {"train", {"margin", "negatives", "batch_size", "epochs", "learning_rate", "clip_norm", "resample_negatives",
                 "prescreen_l2", "prescreen_iterations"}},
      {"taxonomy", {"tau", "index"}},
      {"extraction", {"cap", "min_chars", "intensity"}},
      {"panel", {"delta", "first_year", "last_year"}},
      {"econ", {"baseline_first", "baseline_last", "controls", "fixed_effects"}},
  };
  return keys;
}

class Reader {
 public:
  explicit Reader(const Ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) const {
    auto s = tree_.get_child_optional(section);
    if (!s) return std::nullopt;
    auto v = s->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <typename T>
  void number(const std::string& section, const std::string& key, T& out) const {
    auto v = raw(section, key);
    if (!v) return;
    const std::string field = section + "." + key;
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out = static_cast<T>(std::stod(*v, &used));
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v->empty() && (*v)[0] == '-') throw ConfigError(field, "must not be negative");
        out = static_cast<T>(std::stoull(*v, &used));
      } else {
        out = static_cast<T>(std::stoll(*v, &used));
      }
      if (used != v->size()) throw std::invalid_argument("trailing characters");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(field, "expected a number, got '" + *v + "'");
    }
  }

  void flag(const std::string& section, const std::string& key, bool& out) const {
    auto v = raw(section, key);
    if (!v) return;
    const auto s = to_lower_ascii(*v);
    if (s == "true" || s == "1" || s == "yes") {
      out = true;
    } else if (s == "false" || s == "0" || s == "no") {
      out = false;
    } else {
      throw ConfigError(section + "." + key, "expected true or false, got '" + *v + "'");
    }
  }

  void text(const std::string& section, const std::string& key, std::string& out) const {
    if (auto v = raw(section, key)) out = *v;
  }

  void list(const std::string& section, const std::string& key, std::vector<std::string>& out) const {
    auto v = raw(section, key);
    if (!v) return;
    out.clear();
    for (const auto& part : split(*v, ',')) {
      auto t = trim(part);
      if (!t.empty()) out.push_back(t);
    }
  }

 private:
  const Ptree& tree_;
};

bool on_grid(double v, std::initializer_list<double> grid) {
  return std::any_of(grid.begin(), grid.end(), [&](double g) { return std::abs(v - g) < 1e-12; });
}

}  // namespace

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config", "file not found: " + path.string());
  Ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config", e.message() + " at line " + std::to_string(e.line()));
  }
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError(section, "unknown section");
    if (!body.data().empty()) throw ConfigError(section, "key outside of a section");
    for (const auto& [key, _] : body) {
      if (!it->second.count(key)) throw ConfigError(section + "." + key, "unknown key");
    }
  }

  Reader r(tree);
  PipelineConfig c;
  const fs::path base = fs::absolute(path).parent_path();
  const auto resolve = [&](const std::string& key, fs::path& out, bool required) {
    auto v = r.raw("paths", key);
    if (!v || v->empty()) {
      if (required) throw ConfigError("paths." + key, "required");
      return false;
    }
    fs::path p(*v);
    out = p.is_absolute() ? p : (base / p).lexically_normal();
    return true;
  };
  resolve("skills", c.skills, true);
  resolve("occupations", c.occupations, true);
  resolve("tasks", c.tasks, true);
  resolve("postings", c.postings, true);
  resolve("controls", c.controls, true);
  resolve("examiners", c.examiners, true);
  fs::path lexicon;
  if (resolve("lexicon", lexicon, false)) c.lexicon = lexicon;
  resolve("out_dir", c.out_dir, false);
  if (c.out_dir.is_relative()) c.out_dir = (base / c.out_dir).lexically_normal();
  r.text("paths", "base_version", c.base_version);
  r.text("paths", "forward_version", c.forward_version);

  r.number("run", "seed", c.seed);
  r.number("data", "per_level", c.per_level);
  r.number("data", "boilerplate", c.boilerplate);
  r.number("model", "input", c.dims.input);
  r.number("model", "hidden", c.dims.hidden);
  r.number("model", "attention", c.dims.attention);
  r.number("model", "output", c.dims.output);
  r.number("model", "max_len", c.max_len);
  r.number("model", "min_bigram_count", c.vocab.min_bigram_count);
  r.number("model", "max_bigrams", c.vocab.max_bigrams);
  r.number("train", "margin", c.training.margin);
  r.number("train", "negatives", c.training.negatives);
  r.number("train", "batch_size", c.training.batch_size);
  r.number("train", "epochs", c.training.epochs);
  r.number("train", "learning_rate", c.training.learning_rate);
  r.number("train", "clip_norm", c.training.clip_norm);
  r.flag("train", "resample_negatives", c.training.resample_negatives);
  r.number("train", "prescreen_l2", c.prescreen.l2);
  r.number("train", "prescreen_iterations", c.prescreen.max_iterations);
  r.number("taxonomy", "tau", c.tau);
  if (auto v = r.raw("taxonomy", "index")) {
    if (*v == "exact") {
      c.index_mode = IndexMode::exact;
    } else if (*v == "approximate") {
      c.index_mode = IndexMode::approximate;
    } else {
      throw ConfigError("taxonomy.index", "expected exact or approximate, got '" + *v + "'");
    }
  }
  r.number("extraction", "cap", c.cap);
  r.number("extraction", "min_chars", c.min_chars);
  if (auto v = r.raw("extraction", "intensity")) {
    if (*v == "sets") {
      c.intensity = IntensityMode::sets;
    } else if (*v == "mentions") {
      c.intensity = IntensityMode::mentions;
    } else {
      throw ConfigError("extraction.intensity", "expected sets or mentions, got '" + *v + "'");
    }
  }
  r.number("panel", "delta", c.delta);
  r.number("panel", "first_year", c.first_year);
  r.number("panel", "last_year", c.last_year);
  r.number("econ", "baseline_first", c.baseline_first);
  r.number("econ", "baseline_last", c.baseline_last);
  r.list("econ", "controls", c.controls_list);
  r.list("econ", "fixed_effects", c.fixed_effects);

  if (const char* env = std::getenv("SKILLMAP_OUT_DIR"); env && *env) c.out_dir = fs::absolute(env);
  c.validate();
  return c;
}

void PipelineConfig::validate() {
  warnings.clear();
  for (const auto& [name, p] : std::initializer_list<std::pair<const char*, const fs::path*>>{
           {"paths.skills", &skills}, {"paths.occupations", &occupations}, {"paths.tasks", &tasks},
           {"paths.postings", &postings}, {"paths.controls", &controls}, {"paths.examiners", &examiners}}) {
    if (!fs::exists(*p)) throw ConfigError(name, "file not found: " + p->string());
  }
  if (lexicon && !fs::exists(*lexicon)) throw ConfigError("paths.lexicon", "file not found: " + lexicon->string());
  if (base_version.empty() || forward_version.empty()) throw ConfigError("paths.base_version", "versions must be named");
  if (per_level < 1) throw ConfigError("data.per_level", "must be >= 1");
  if (boilerplate < 1) throw ConfigError("data.boilerplate", "must be >= 1");
  if (dims.input == 0 || dims.hidden == 0 || dims.attention == 0 || dims.output == 0) {
    throw ConfigError("model", "dimensions must be positive");
  }
  if (max_len < 1) throw ConfigError("model.max_len", "must be >= 1");
  try {
    training.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("train", e.what());
  }
  if (!(prescreen.l2 >= 0.0)) throw ConfigError("train.prescreen_l2", "must be >= 0");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("taxonomy.tau", "must lie in [0, 1]");
  if (!on_grid(tau, {0.5, 0.6, 0.7, 0.8})) {
    warnings.push_back("custom threshold: tau=" + format_double(tau) + " is off the 0.5/0.6/0.7/0.8 grid");
  }
  if (cap < 1) throw ConfigError("extraction.cap", "must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("panel.delta", "must lie in (0, 1)");
  if (!on_grid(delta, {0.15, 0.20, 0.30})) {
    warnings.push_back("custom depreciation: delta=" + format_double(delta) + " is off the 0.15/0.20/0.30 grid");
  }
  if (first_year > last_year) throw ConfigError("panel.first_year", "must not exceed panel.last_year");
  if (baseline_first > baseline_last) throw ConfigError("econ.baseline_first", "must not exceed econ.baseline_last");
  if (fixed_effects.empty()) throw ConfigError("econ.fixed_effects", "needs at least one dimension");
  for (const auto& fe : fixed_effects) {
    for (const auto& part : split(fe, '*')) {
      if (part != "firm_id" && part != "occ_id" && part != "year") {
        throw ConfigError("econ.fixed_effects", "unknown dimension '" + part + "'");
      }
    }
  }
  for (const auto& c : controls_list) {
    if (c != "log_assets" && c != "roa" && c != "leverage" && c != "rnd_intensity") {
      throw ConfigError("econ.controls", "unknown control '" + c + "'");
    }
  }
}

std::string PipelineConfig::stage_settings(Stage stage) const {
  std::ostringstream s;
  const auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& x : v) out += (out.empty() ? "" : ",") + x;
    return out;
  };
  s << "stage=" << to_string(stage) << '\n' << "seed=" << seed << '\n';
  switch (stage) {
    case Stage::gen_data:
      s << "base_version=" << base_version << "\nper_level=" << per_level << "\nboilerplate=" << boilerplate << '\n';
      break;
    case Stage::train:
      s << "base_version=" << base_version << "\ninput=" << dims.input << "\nhidden=" << dims.hidden
        << "\nattention=" << dims.attention << "\noutput=" << dims.output << "\nmax_len=" << max_len
        << "\nmin_bigram_count=" << vocab.min_bigram_count << "\nmax_bigrams=" << vocab.max_bigrams
        << "\nmargin=" << format_double(training.margin) << "\nnegatives=" << training.negatives
        << "\nbatch_size=" << training.batch_size << "\nepochs=" << training.epochs
        << "\nlearning_rate=" << format_double(training.learning_rate)
        << "\nclip_norm=" << format_double(training.clip_norm)
        << "\nresample_negatives=" << training.resample_negatives
        << "\nprescreen_l2=" << format_double(prescreen.l2)
        << "\nprescreen_iterations=" << prescreen.max_iterations << '\n';
      break;
    case Stage::map_taxonomy:
      s << "base_version=" << base_version << "\nforward_version=" << forward_version
        << "\ntau=" << format_double(tau) << "\nmax_len=" << max_len << '\n';
      break;
    case Stage::extract:
      s << "base_version=" << base_version << "\ntau=" << format_double(tau) << "\ncap=" << cap
        << "\nmin_chars=" << min_chars << "\nmax_len=" << max_len << "\nfirst_year=" << first_year
        << "\nlast_year=" << last_year << '\n';
      break;
    case Stage::panel:
      s << "delta=" << format_double(delta) << "\nintensity=" << (intensity == IntensityMode::sets ? "sets" : "mentions")
        << "\nlexicon=" << (lexicon ? lexicon->string() : "default") << '\n';
      break;
    case Stage::estimate:
      s << "baseline_first=" << baseline_first << "\nbaseline_last=" << baseline_last
        << "\ncontrols=" << join(controls_list) << "\nfixed_effects=" << join(fixed_effects) << '\n';
      break;
    case Stage::stability:
      s << "base_version=" << base_version << "\nforward_version=" << forward_version << '\n';
      break;
    case Stage::all:
      break;
  }
  return s.str();
}

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Artifacts

namespace artifacts {
fs::path pairs(const PipelineConfig& c) { return c.out_dir / "data" / "pairs.tsv"; }
fs::path prescreen_set(const PipelineConfig& c) { return c.out_dir / "data" / "prescreen.tsv"; }
fs::path encoder(const PipelineConfig& c) { return c.out_dir / "model" / "encoder.bin"; }
fs::path vocab(const PipelineConfig& c) { return c.out_dir / "model" / "vocab.txt"; }
fs::path prescreener(const PipelineConfig& c) { return c.out_dir / "model" / "prescreener.txt"; }
fs::path metrics(const PipelineConfig& c) { return c.out_dir / "model" / "metrics.txt"; }
fs::path loss(const PipelineConfig& c) { return c.out_dir / "model" / "loss.tsv"; }
fs::path baseline(const PipelineConfig& c, const std::string& version) {
  return c.out_dir / "taxonomy" / ("baseline_" + version + ".tsv");
}
fs::path forward_sets(const PipelineConfig& c) { return c.out_dir / "taxonomy" / "forward.tsv"; }
fs::path extracted(const PipelineConfig& c) { return c.out_dir / "extract" / "postings.jsonl"; }
fs::path posting_summary(const PipelineConfig& c) { return c.out_dir / "extract" / "summary.tsv"; }
fs::path panel(const PipelineConfig& c) { return c.out_dir / "panel" / "panel.tsv"; }
fs::path estimate(const PipelineConfig& c, const std::string& name) {
  return c.out_dir / "estimates" / (name + ".txt");
}
fs::path stability(const PipelineConfig& c, const std::string& kind) {
  return c.out_dir / "stability" / (kind + ".txt");
}
fs::path manifest(const PipelineConfig& c, Stage stage) {
  return c.out_dir / "manifests" / (std::string(to_string(stage)) + ".json");
}
}  // namespace artifacts

std::vector<std::string> estimate_names() {
  return {"ols_aligned", "tsls_aligned", "ols_nonaligned", "tsls_nonaligned"};
}

EncoderModel load_model(const PipelineConfig& config) {
  EncoderModel m;
  m.vocab = Vocabulary::load(artifacts::vocab(config));
  m.params = EncoderParams::load(artifacts::encoder(config));
  if (m.params.dims().vocab != m.vocab.size()) {
    throw ShapeError("embedding", "checkpoint rows do not match the saved vocabulary");
  }
  m.max_len = config.max_len;
  return m;
}

// ---------------------------------------------------------------------------
// Extraction results on disk

void write_extracted(const fs::path& path, const std::vector<PostingSkills>& postings) {
  std::string out;
  for (const auto& p : postings) {
    json j;
    j["posting_id"] = p.posting_id;
    j["firm_id"] = p.firm_id;
    j["year"] = p.year;
    j["occ_id"] = p.occ_id;
    j["sentences"] = p.sentences;
    j["skills"] = std::vector<std::string>(p.skills.begin(), p.skills.end());
    json src = json::object();
    for (const auto& [id, idx] : p.sources) src[id] = idx;
    j["sources"] = src;
    j["kept_sentences"] = p.kept_sentences;
    j["aligned"] = std::vector<std::string>(p.aligned.begin(), p.aligned.end());
    j["nonaligned"] = std::vector<std::string>(p.nonaligned.begin(), p.nonaligned.end());
    j["error"] = p.error ? json(*p.error) : json(nullptr);
    j["document"] = std::vector<double>(p.document.data(), p.document.data() + p.document.size());
    out += j.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<PostingSkills> read_extracted(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<PostingSkills> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    PostingSkills p;
    p.posting_id = j.at("posting_id").get<std::string>();
    p.firm_id = j.at("firm_id").get<std::string>();
    p.year = j.at("year").get<int>();
    p.occ_id = j.at("occ_id").get<std::string>();
    p.sentences = j.at("sentences").get<std::size_t>();
    for (const auto& s : j.at("skills")) p.skills.insert(s.get<std::string>());
    for (const auto& [id, idx] : j.at("sources").items()) p.sources[id] = idx.get<std::vector<std::size_t>>();
    p.kept_sentences = j.at("kept_sentences").get<std::vector<std::string>>();
    for (const auto& s : j.at("aligned")) p.aligned.insert(s.get<std::string>());
    for (const auto& s : j.at("nonaligned")) p.nonaligned.insert(s.get<std::string>());
    if (!j.at("error").is_null()) p.error = j.at("error").get<std::string>();
    const auto doc = j.at("document").get<std::vector<double>>();
    p.document = Eigen::Map<const Eigen::VectorXd>(doc.data(), static_cast<Eigen::Index>(doc.size()));
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage execution

namespace {

struct Input {
  fs::path path;
  std::optional<Stage> producer;  // empty for raw inputs named in the config
};

using Notes = std::vector<std::pair<std::string, std::string>>;

struct StageDef {
  Stage stage;
  std::vector<Input> inputs;
  std::vector<fs::path> outputs;
  std::function<void(Notes&)> body;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string rel(const PipelineConfig& c, const fs::path& p) {
  auto r = p.lexically_relative(c.out_dir);
  return r.empty() || r.string().rfind("..", 0) == 0 ? p.string() : r.generic_string();
}

StageResult execute(const PipelineConfig& config, const StageDef& def) {
  for (const auto& in : def.inputs) {
    if (fs::exists(in.path)) continue;
    if (in.producer) throw MissingArtifactError(in.path, to_string(*in.producer));
    throw ConfigError("paths", "input not found: " + in.path.string());
  }
  json inputs = json::object();
  for (const auto& in : def.inputs) inputs[rel(config, in.path)] = sha256_file(in.path);
  const std::string settings = sha256_hex(config.stage_settings(def.stage));
  const fs::path manifest_path = artifacts::manifest(config, def.stage);

  if (fs::exists(manifest_path)) {
    try {
      const auto old = json::parse(read_file(manifest_path));
      bool same = old.at("settings_sha256") == settings && old.at("inputs") == inputs;
      if (same) {
        for (const auto& out : def.outputs) {
          const auto key = rel(config, out);
          same = same && fs::exists(out) && old.at("outputs").contains(key) &&
                 old.at("outputs").at(key) == sha256_file(out);
        }
      }
      if (same) {
        spdlog::info("stage {} is up to date", to_string(def.stage));
        return {def.stage, true, 0.0};
      }
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable manifest {}: {}", manifest_path.string(), e.what());
    }
  }

  spdlog::info("running stage {}", to_string(def.stage));
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  Notes notes;
  def.body(notes);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json outputs = json::object();
  for (const auto& out : def.outputs) {
    if (!fs::exists(out)) throw std::runtime_error("stage did not produce " + out.string());
    outputs[rel(config, out)] = sha256_file(out);
  }
  json m;
  m["stage"] = to_string(def.stage);
  m["seed"] = config.seed;
  m["settings"] = config.stage_settings(def.stage);
  m["settings_sha256"] = settings;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["warnings"] = config.warnings;
  json extra = json::object();
  for (const auto& [k, v] : notes) extra[k] = v;
  m["notes"] = extra;
  m["started"] = started;
  m["finished"] = utc_now();
  m["elapsed_seconds"] = seconds;
  write_file(manifest_path, m.dump(2) + "\n");
  return {def.stage, false, seconds};
}

SkillTaxonomy skills_for(const PipelineConfig& c, const std::string& version) {
  auto tax = load_skill_taxonomy(c.skills, version);
  if (tax.empty()) throw std::runtime_error("no skills for version " + version + " in " + c.skills.string());
  return tax;
}

OccupationTaxonomy occupations_for(const PipelineConfig& c, const std::string& version) {
  auto occ = load_occupation_taxonomy(c.occupations, c.tasks, version);
  if (occ.empty()) throw std::runtime_error("no occupations for version " + version);
  return occ;
}

IndexConfig index_config(const PipelineConfig& c) {
  IndexConfig ic;
  ic.mode = c.index_mode;
  ic.seed = derive_seed(c.seed, {0x1D});
  return ic;
}

void stage_gen_data(const PipelineConfig& c, Notes& notes) {
  const auto tax = skills_for(c, c.base_version);
  const auto pairs = generate_synthetic_pairs(tax, c.per_level, derive_seed(c.seed, {1}));
  write_pairs(artifacts::pairs(c), pairs);
  const auto pres = build_prescreen_set(pairs, c.boilerplate, derive_seed(c.seed, {2}));
  write_labeled(artifacts::prescreen_set(c), pres);
  const auto train = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.split == Split::train; });
  notes.emplace_back("pairs", std::to_string(pairs.size()));
  notes.emplace_back("train_pairs", std::to_string(train));
  notes.emplace_back("eval_pairs", std::to_string(pairs.size() - static_cast<std::size_t>(train)));
}

void stage_train(const PipelineConfig& c, Notes& notes) {
  const auto tax = skills_for(c, c.base_version);
  const auto pairs = read_pairs(artifacts::pairs(c));
  const auto pres = read_labeled(artifacts::prescreen_set(c));

  std::vector<std::string> texts;
  std::vector<SyntheticPair> eval;
  for (const auto& p : pairs) {
    if (p.split == Split::train) {
      texts.push_back(p.sentence);
    } else {
      eval.push_back(p);
    }
  }
  for (const auto& s : tax.skills()) texts.push_back(SkillTaxonomy::encoder_text(s));
  for (const auto& s : pres) texts.push_back(s.text);
  const auto vocab = Vocabulary::build(texts, c.vocab);

  EncoderDims dims = c.dims;
  dims.vocab = vocab.size();
  EncoderModel model{vocab, EncoderParams::random(dims, derive_seed(c.seed, {3})), c.max_len};
  const auto untrained = evaluate_retrieval(eval, model, SkillIndex::build(tax, model, index_config(c)));

  TrainingConfig tc = c.training;
  tc.seed = derive_seed(c.seed, {4});
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train_biencoder(make_training_data(pairs, tax), vocab, c.max_len, tc, model.params);
  const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  model.params = std::move(result.params);
  const auto trained = evaluate_retrieval(eval, model, SkillIndex::build(tax, model, index_config(c)));

  const auto prescreener = train_prescreener(pres, model, c.prescreen);
  std::size_t correct = 0;
  for (const auto& s : pres) correct += (prescreener.probability(model.pooled(s.text)) >= 0.5) == (s.label == 1);

  vocab.save(artifacts::vocab(c));
  model.params.save(artifacts::encoder(c));
  prescreener.save(artifacts::prescreener(c));
  std::ostringstream m;
  m << to_record(trained) << "untrained_mrr=" << format_double(untrained.mrr) << '\n'
    << "untrained_recall_at_5=" << format_double(untrained.recall_at_5) << '\n'
    << "prescreen_accuracy=" << format_double(pres.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pres.size()))
    << '\n'
    << "vocab_size=" << vocab.size() << '\n';
  write_file(artifacts::metrics(c), m.str());
  std::ostringstream l;
  l << "epoch\tloss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) l << e + 1 << '\t' << format_double(result.epoch_loss[e]) << '\n';
  write_file(artifacts::loss(c), l.str());
  notes.emplace_back("train_seconds", format_double(train_seconds));
  spdlog::info("trained encoder in {:.1f}s: MRR {:.4f}, R@5 {:.4f} (untrained R@5 {:.4f})", train_seconds, trained.mrr,
               trained.recall_at_5, untrained.recall_at_5);
}

void stage_map_taxonomy(const PipelineConfig& c, Notes& notes) {
  const auto model = load_model(c);
  BaselineSkillMap maps[2];
  const std::string versions[2] = {c.base_version, c.forward_version};
  for (int k = 0; k < 2; ++k) {
    const auto index = SkillIndex::build(skills_for(c, versions[k]), model, index_config(c));
    maps[k] = build_baseline_sets(occupations_for(c, versions[k]), index, model, c.tau);
    write_baseline(artifacts::baseline(c, versions[k]), maps[k]);
  }
  const auto fl = forward_looking_sets(maps[0], maps[1]);
  write_baseline(artifacts::forward_sets(c), {"forward", c.tau, fl.sets});
  std::size_t total = 0;
  for (const auto& [o, s] : fl.sets) total += s.size();
  notes.emplace_back("forward_skills", std::to_string(total));
  for (const auto& [o, why] : fl.errors) {
    spdlog::warn("forward-looking set for {}: {}", o, why);
    notes.emplace_back("forward_error." + o, why);
  }
}

void stage_extract(const PipelineConfig& c, Notes& notes) {
  const auto model = load_model(c);
  const auto prescreener = Prescreener::load(artifacts::prescreener(c));
  const auto index = SkillIndex::build(skills_for(c, c.base_version), model, index_config(c));
  const auto occupations = occupations_for(c, c.base_version);
  IndexConfig exact;
  const auto titles = SkillIndex::build_titles(occupations, model, exact);
  const auto baseline = read_baseline(artifacts::baseline(c, c.base_version));

  auto loaded = load_postings(c.postings, CorpusSchema{c.first_year, c.last_year});
  std::sort(loaded.postings.begin(), loaded.postings.end(),
            [](const JobPosting& a, const JobPosting& b) { return a.posting_id < b.posting_id; });
  ExtractionConfig ec;
  ec.tau = c.tau;
  ec.cap = c.cap;
  ec.segmentation.min_chars = c.min_chars;
  std::vector<PostingSkills> results;
  results.reserve(loaded.postings.size());
  std::size_t errors = 0;
  for (const auto& p : loaded.postings) {
    auto r = extract_skills(p, prescreener, model, index, ec);
    r.occ_id = assign_occupation(model.embed(p.title), titles);
    classify_posting(r, baseline);
    if (r.error) {
      ++errors;
      spdlog::warn("posting {}: {}", p.posting_id, *r.error);
    }
    results.push_back(std::move(r));
  }
  write_extracted(artifacts::extracted(c), results);
  write_posting_skills(artifacts::posting_summary(c), results);
  notes.emplace_back("postings", std::to_string(results.size()));
  notes.emplace_back("rejected_records", std::to_string(loaded.rejected));
  notes.emplace_back("classification_errors", std::to_string(errors));
}

void stage_panel(const PipelineConfig& c, Notes& notes) {
  const auto postings = read_extracted(artifacts::extracted(c));
  const auto controls = load_controls(c.controls);
  const auto stocks = ai_stock(controls, c.delta);
  std::map<FirmYear, FirmYearControls> by_key;
  for (const auto& r : controls) by_key[{r.firm_id, r.year}] = r;
  const auto forward = read_baseline(artifacts::forward_sets(c)).sets;
  const auto lexicon = c.lexicon ? load_lexicon(*c.lexicon) : default_lexicon();
  PanelInputs in;
  in.forward = &forward;
  in.stocks = &stocks;
  in.controls = &by_key;
  in.lexicon = &lexicon;
  in.intensity = c.intensity;
  const auto cells = aggregate_panel(postings, in);
  write_panel(artifacts::panel(c), cells);
  notes.emplace_back("cells", std::to_string(cells.size()));
  notes.emplace_back("intensity_mode", c.intensity == IntensityMode::sets ? "sets" : "mentions");
}

void stage_estimate(const PipelineConfig& c, Notes& notes) {
  const auto cells = read_panel(artifacts::panel(c));
  const auto records = load_examiner_records(c.examiners);
  const auto leniency = examiner_leniency(records, c.baseline_first, c.baseline_last);
  const auto instrument = build_instrument(records, leniency);

  const double nan = std::nan("");
  std::vector<std::string> firm, occ, year;
  std::map<std::string, std::vector<double>> num;
  std::map<FirmYear, std::size_t> fy_row;
  std::vector<std::string> fy_firm, fy_year;
  std::map<std::string, std::vector<double>> fy_num;
  const auto control_value = [&](const PanelCell& cell, const std::string& name) {
    if (!cell.controls) return nan;
    if (name == "log_assets") return cell.controls->log_assets;
    if (name == "roa") return cell.controls->roa;
    if (name == "leverage") return cell.controls->leverage;
    return cell.controls->rnd_intensity;
  };
  for (const auto& cell : cells) {
    const auto zt = instrument.values.find({cell.firm_id, cell.year});
    const double z = zt == instrument.values.end() ? nan : zt->second;
    firm.push_back(cell.firm_id);
    occ.push_back(cell.occ_id);
    year.push_back(std::to_string(cell.year));
    num["aligned"].push_back(static_cast<double>(cell.aligned));
    num["nonaligned"].push_back(static_cast<double>(cell.nonaligned));
    num["ai_stock"].push_back(cell.ai_stock);
    num["z"].push_back(z);
    for (const auto& name : c.controls_list) num[name].push_back(control_value(cell, name));
    if (fy_row.emplace(FirmYear{cell.firm_id, cell.year}, fy_firm.size()).second) {
      fy_firm.push_back(cell.firm_id);
      fy_year.push_back(std::to_string(cell.year));
      fy_num["ai_stock"].push_back(cell.ai_stock);
      fy_num["z"].push_back(z);
      for (const auto& name : c.controls_list) fy_num[name].push_back(control_value(cell, name));
    }
  }
  DataFrame data;
  data.add_key("firm_id", std::move(firm));
  data.add_key("occ_id", std::move(occ));
  data.add_key("year", std::move(year));
  for (auto& [k, v] : num) data.add_numeric(k, std::move(v));
  DataFrame fy;
  fy.add_key("firm_id", std::move(fy_firm));
  fy.add_key("year", std::move(fy_year));
  for (auto& [k, v] : fy_num) fy.add_numeric(k, std::move(v));

  std::size_t iv_firm_years = 0;
  for (double z : fy.numeric("z")) iv_firm_years += std::isfinite(z) ? 1 : 0;
  notes.emplace_back("examiners_scored", std::to_string(leniency.size()));
  notes.emplace_back("iv_firm_years", std::to_string(iv_firm_years));
  notes.emplace_back("firm_years_without_instrument", std::to_string(fy.rows() - iv_firm_years));

  for (const std::string outcome : {"aligned", "nonaligned"}) {
    RegressionSpec spec;
    spec.outcome = outcome;
    spec.controls = c.controls_list;
    spec.fixed_effects = c.fixed_effects;
    spec.transform = Transform::log1p;
    spec.name = "ols_" + outcome;
    write_file(artifacts::estimate(c, spec.name), to_record(ols_fe(data, spec)));

    spec.name = "tsls_" + outcome;
    auto iv = tsls(data, spec);
    iv.notes.emplace_back("iv_sample", "firm-years with at least one AI application");
    try {
      const auto fs1 = first_stage_firm_year(fy, spec);
      iv.notes.emplace_back("first_stage_f_firm_year", format_double(*fs1.first_stage_f));
      iv.notes.emplace_back("first_stage_coef_firm_year", format_double(*fs1.first_stage_coef));
      iv.notes.emplace_back("first_stage_se_firm_year", format_double(*fs1.first_stage_se));
      iv.notes.emplace_back("first_stage_n_firm_year", std::to_string(fs1.n));
    } catch (const std::exception& e) {
      iv.notes.emplace_back("first_stage_firm_year_error", e.what());
    }
    write_file(artifacts::estimate(c, spec.name), to_record(iv));
  }
}

void stage_stability(const PipelineConfig& c, Notes& notes) {
  const auto a = occupations_for(c, c.base_version);
  const auto b = occupations_for(c, c.forward_version);
  const auto list = occupation_list_stability(a, b);
  const auto tasks = task_set_stability(a, b);
  write_file(artifacts::stability(c, "occupation_list"), to_record(list));
  write_file(artifacts::stability(c, "task_sets"), to_record(tasks));
  notes.emplace_back("occupation_list_stability", format_double(list.stability));
  notes.emplace_back("task_set_stability", format_double(tasks.stability));
}

StageDef define(const PipelineConfig& c, Stage stage) {
  const auto raw = [](const fs::path& p) { return Input{p, std::nullopt}; };
  const auto from = [](const fs::path& p, Stage s) { return Input{p, s}; };
  switch (stage) {
    case Stage::gen_data:
      return {stage, {raw(c.skills)}, {artifacts::pairs(c), artifacts::prescreen_set(c)},
              [&c](Notes& n) { stage_gen_data(c, n); }};
    case Stage::train:
      return {stage,
              {raw(c.skills), from(artifacts::pairs(c), Stage::gen_data), from(artifacts::prescreen_set(c), Stage::gen_data)},
              {artifacts::vocab(c), artifacts::encoder(c), artifacts::prescreener(c), artifacts::metrics(c), artifacts::loss(c)},
              [&c](Notes& n) { stage_train(c, n); }};
    case Stage::map_taxonomy:
      return {stage,
              {raw(c.skills), raw(c.occupations), raw(c.tasks), from(artifacts::vocab(c), Stage::train),
               from(artifacts::encoder(c), Stage::train)},
              {artifacts::baseline(c, c.base_version), artifacts::baseline(c, c.forward_version), artifacts::forward_sets(c)},
              [&c](Notes& n) { stage_map_taxonomy(c, n); }};
    case Stage::extract:
      return {stage,
              {raw(c.skills), raw(c.occupations), raw(c.tasks), raw(c.postings), from(artifacts::vocab(c), Stage::train),
               from(artifacts::encoder(c), Stage::train), from(artifacts::prescreener(c), Stage::train),
               from(artifacts::baseline(c, c.base_version), Stage::map_taxonomy)},
              {artifacts::extracted(c), artifacts::posting_summary(c)},
              [&c](Notes& n) { stage_extract(c, n); }};
    case Stage::panel: {
      StageDef d{stage,
                 {raw(c.controls), from(artifacts::extracted(c), Stage::extract),
                  from(artifacts::forward_sets(c), Stage::map_taxonomy)},
                 {artifacts::panel(c)},
                 [&c](Notes& n) { stage_panel(c, n); }};
      if (c.lexicon) d.inputs.push_back(raw(*c.lexicon));
      return d;
    }
    case Stage::estimate: {
      StageDef d{stage, {raw(c.examiners), from(artifacts::panel(c), Stage::panel)}, {}, [&c](Notes& n) {
                   stage_estimate(c, n);
                 }};
      for (const auto& name : estimate_names()) d.outputs.push_back(artifacts::estimate(c, name));
      return d;
    }
    case Stage::stability:
      return {stage, {raw(c.occupations), raw(c.tasks)},
              {artifacts::stability(c, "occupation_list"), artifacts::stability(c, "task_sets")},
              [&c](Notes& n) { stage_stability(c, n); }};
    case Stage::all:
      break;
  }
  throw std::logic_error("stage 'all' has no single definition");
}

}  // namespace

std::vector<StageResult> run_stage(const PipelineConfig& config, Stage stage) {
  for (const auto& w : config.warnings) spdlog::warn("{}", w);
  std::vector<StageResult> out;
  if (stage != Stage::all) {
    out.push_back(execute(config, define(config, stage)));
    return out;
  }
  for (Stage s : {Stage::gen_data, Stage::train, Stage::map_taxonomy, Stage::extract, Stage::panel, Stage::estimate,
                  Stage::stability}) {
    out.push_back(execute(config, define(config, s)));
  }
  return out;
}

int run_pipeline(const PipelineConfig& config, Stage stage) {
  try {
    run_stage(config, stage);
    return 0;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const MissingArtifactError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("stage {} failed: {}", to_string(stage), e.what());
    return 4;
  }
}

}  // namespace skillmap
