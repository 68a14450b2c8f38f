#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "skillmap/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string stage;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "INI configuration file")->required();
  cmd->add_option("--seed", o.seed, "Overrides [run] seed");
  cmd->add_option("--out", o.out, "Overrides the output directory");
}

int run(const Options& o, const std::string& stage_name) {
  using namespace skillmap;
  PipelineConfig config;
  Stage stage;
  try {
    stage = parse_stage(stage_name);
    config = load_config(o.config);
    if (o.seed) config.seed = *o.seed;
    if (!o.out.empty()) config.out_dir = std::filesystem::absolute(o.out);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  }
  return run_pipeline(config, stage);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skill extraction and AI exposure panel pipeline"};
  app.require_subcommand(1);
  Options opts;
  std::string chosen;
  for (const char* name : {"gen-data", "train", "map-taxonomy", "extract", "panel", "estimate", "stability", "all"}) {
    auto* cmd = app.add_subcommand(name, std::string(name) == "all" ? std::string("Run every stage in order")
                                                                   : std::string("Run the ") + name + " stage");
    add_common(cmd, opts);
    cmd->callback([&chosen, name] { chosen = name; });
  }
  auto* run_cmd = app.add_subcommand("run", "Run the stage named by --stage");
  add_common(run_cmd, opts);
  run_cmd->add_option("--stage", opts.stage, "Stage name")->required();
  run_cmd->callback([&] { chosen = opts.stage; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return run(opts, chosen);
}
