#pragma once

// Campaign outputs: the case CSV, the summary and FMC report JSON files, and
// the method comparison table.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mergetest/campaign.hpp"
#include "mergetest/metrics.hpp"

namespace mergetest {

// Provenance written as the first line of every case CSV:
// "# config_hash=<hex> seed=<n> method=<name> vut=<label>".
struct CaseFileHeader {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string method;
  std::string vut;
};

struct CaseFile {
  CaseFileHeader header;
  std::vector<CaseResult> cases;
};

// Columns: level,x_pov0,v_pov0,psi,batch,P,crashed. Doubles are written with
// round-trip precision.
void write_cases_csv(std::ostream& out, const CaseFileHeader& header,
                     const std::vector<CaseResult>& cases);
void write_cases_csv(const std::filesystem::path& path, const CaseFileHeader& header,
                     const std::vector<CaseResult>& cases);

// Throws FormatError on a malformed file (the header comment is optional).
CaseFile read_cases_csv(std::istream& in);
CaseFile read_cases_csv(const std::filesystem::path& path);

// Levels present in `cases`, ascending.
std::vector<int> levels_in(const std::vector<CaseResult>& cases);

nlohmann::json fmc_to_json(const FmcResult& r);

// Per-level FMC plus "pooled", the mean over the reported levels (each level
// contributes an equal share of the combined case space).
nlohmann::json fmc_report(const std::vector<CaseResult>& cases, const std::vector<int>& levels,
                          const PoolRanges& pool, const FmcConfig& cfg);

nlohmann::json campaign_summary(const CampaignRecord& record, const CaseFileHeader& header,
                                const PoolRanges& pool, const FmcConfig& cfg,
                                const std::string& timestamp);

struct ComparisonRow {
  std::string source;
  std::string method;
  int level = 0;
  std::size_t cases = 0;
  std::size_t failing = 0;
  double fmc = 0.0;
};

// One row per (input, level), grouped by level in input order. Throws
// std::invalid_argument when inputs for one level are in different spaces.
std::vector<ComparisonRow> compare_case_files(const std::vector<std::string>& sources,
                                              const std::vector<CaseFile>& files,
                                              const PoolRanges& pool, const FmcConfig& cfg);

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);
// Fixed-width table with one block per level; the best FMC per level is marked
// when a level has more than one row.
void write_comparison_table(std::ostream& out, const std::vector<ComparisonRow>& rows);

}  // namespace mergetest
