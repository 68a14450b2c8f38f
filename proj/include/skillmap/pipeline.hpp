#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skillmap/corpus.hpp"
#include "skillmap/encoder.hpp"
#include "skillmap/extraction.hpp"
#include "skillmap/taxonomy.hpp"
#include "skillmap/trainer.hpp"

namespace skillmap {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class MissingArtifactError : public std::runtime_error {
 public:
  MissingArtifactError(const std::filesystem::path& artifact, const std::string& stage)
      : std::runtime_error("missing " + artifact.string() + "; run stage '" + stage + "' first"), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class Stage { gen_data, train, map_taxonomy, extract, panel, estimate, stability, all };

const char* to_string(Stage stage);
Stage parse_stage(std::string_view name);  // throws ConfigError

struct PipelineConfig {
  // [paths]
  std::filesystem::path skills;
  std::filesystem::path occupations;
  std::filesystem::path tasks;
  std::filesystem::path postings;
  std::filesystem::path controls;
  std::filesystem::path examiners;
  std::optional<std::filesystem::path> lexicon;
  std::filesystem::path out_dir = "out";
  std::string base_version = "2018";
  std::string forward_version = "2022";

  // [run]
  std::uint64_t seed = 7;

  // [data]
  int per_level = 20;
  std::size_t boilerplate = 1200;

  // [model]
  EncoderDims dims;
  std::size_t max_len = 64;
  VocabConfig vocab;

  // [train]
  TrainingConfig training;
  PrescreenConfig prescreen;

  // [taxonomy]
  double tau = 0.6;
  IndexMode index_mode = IndexMode::exact;

  // [extraction]
  std::size_t cap = 5;
  std::size_t min_chars = 4;
  IntensityMode intensity = IntensityMode::sets;

  // [panel]
  double delta = 0.15;
  int first_year = 1990;
  int last_year = 2100;

  // [econ]
  int baseline_first = 2010;
  int baseline_last = 2017;
  std::vector<std::string> controls_list = {"log_assets", "roa", "leverage", "rnd_intensity"};
  std::vector<std::string> fixed_effects = {"firm_id", "occ_id", "year"};

  // Notes raised while validating, such as off-grid thresholds.
  std::vector<std::string> warnings;

  // Field-level checks; fills warnings. Throws ConfigError.
  void validate();
  // Canonical key=value text of the settings a stage depends on.
  std::string stage_settings(Stage stage) const;
};

// INI file with [paths], [run], [data], [model], [train], [taxonomy],
// [extraction], [panel] and [econ] sections. Relative paths resolve against
// the config file's directory. SKILLMAP_OUT_DIR, when set, replaces the
// output directory.
PipelineConfig load_config(const std::filesystem::path& path);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view data);

struct StageResult {
  Stage stage;
  bool skipped = false;  // inputs and outputs matched the previous manifest
  double seconds = 0.0;
};

// Runs one stage, or every stage in order for Stage::all. Throws
// MissingArtifactError, ConfigError or std::exception.
std::vector<StageResult> run_stage(const PipelineConfig& config, Stage stage);

// Exit codes: 0 success, 2 config error, 3 missing upstream artifact,
// 4 runtime failure. Errors are logged.
int run_pipeline(const PipelineConfig& config, Stage stage);

// Artifact locations under the output directory.
namespace artifacts {
std::filesystem::path pairs(const PipelineConfig& c);
std::filesystem::path prescreen_set(const PipelineConfig& c);
std::filesystem::path encoder(const PipelineConfig& c);
std::filesystem::path vocab(const PipelineConfig& c);
std::filesystem::path prescreener(const PipelineConfig& c);
std::filesystem::path metrics(const PipelineConfig& c);
std::filesystem::path loss(const PipelineConfig& c);
std::filesystem::path baseline(const PipelineConfig& c, const std::string& version);
std::filesystem::path forward_sets(const PipelineConfig& c);
std::filesystem::path extracted(const PipelineConfig& c);
std::filesystem::path posting_summary(const PipelineConfig& c);
std::filesystem::path panel(const PipelineConfig& c);
std::filesystem::path estimate(const PipelineConfig& c, const std::string& name);
std::filesystem::path stability(const PipelineConfig& c, const std::string& kind);
std::filesystem::path manifest(const PipelineConfig& c, Stage stage);
}  // namespace artifacts

// The four headline specifications: OLS and 2SLS of log(1 + aligned) and
// log(1 + nonaligned) on the AI stock.
std::vector<std::string> estimate_names();

EncoderModel load_model(const PipelineConfig& config);

// Round-trips extraction results between the extract and panel stages.
void write_extracted(const std::filesystem::path& path, const std::vector<PostingSkills>& postings);
std::vector<PostingSkills> read_extracted(const std::filesystem::path& path);

}  // namespace skillmap
