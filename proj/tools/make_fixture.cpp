#include <cstdint>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "skillmap/fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write the synthetic toy fixture"};
  std::string dir;
  skillmap::FixtureConfig config;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--firms", config.firms, "Number of firms");
  app.add_option("--seed", config.seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto fixture = skillmap::make_fixture(config);
    skillmap::write_fixture(dir, fixture);
    spdlog::info("wrote {} postings, {} firm-years and {} examiner records to {}", fixture.postings.size(),
                 fixture.controls.size(), fixture.examiner_records.size(), dir);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 4;
  }
  return 0;
}
