#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "skillmap/corpus.hpp"
#include "skillmap/econ.hpp"
#include "skillmap/taxonomy_types.hpp"

namespace skillmap {

// A small synthetic labor market: a 50-skill label space, 20 occupations in
// two taxonomy versions, postings, firm controls and patent examiner records.
struct FixtureConfig {
  std::size_t firms = 200;
  int first_year = 2018;
  int last_year = 2022;
  int flow_first_year = 2013;
  int baseline_first = 2010;
  int baseline_last = 2017;
  std::size_t examiners = 40;
  std::size_t baseline_per_examiner = 30;
  std::uint64_t seed = 20240601;
};

struct Fixture {
  std::vector<Skill> skills;
  std::vector<Occupation> occupations_base;     // 2018 version
  std::vector<Occupation> occupations_forward;  // 2022 version
  std::vector<JobPosting> postings;
  std::vector<FirmYearControls> controls;
  std::vector<ExaminerRecord> examiner_records;
};

std::vector<Skill> toy_skills();
Fixture make_fixture(const FixtureConfig& config = {});

// skills.tsv, occupations.tsv, tasks.tsv, postings.jsonl, controls.tsv,
// examiners.tsv under dir.
void write_fixture(const std::filesystem::path& dir, const Fixture& fixture);

}  // namespace skillmap
