#include "mergetest/report.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "mergetest/errors.hpp"

namespace mergetest {

namespace {

constexpr const char* kCaseColumns = "level,x_pov0,v_pov0,psi,batch,P,crashed";

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s, std::size_t line) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(s);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

CaseFileHeader parse_header(const std::string& line) {
  CaseFileHeader h;
  std::istringstream in(line.substr(1));
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "config_hash") h.config_hash = value;
    if (key == "seed") h.seed = static_cast<std::uint64_t>(parse_int(value, 1));
    if (key == "method") h.method = value;
    if (key == "vut") h.vut = value;
  }
  return h;
}

}  // namespace

void write_cases_csv(std::ostream& out, const CaseFileHeader& header,
                     const std::vector<CaseResult>& cases) {
  out << "# config_hash=" << header.config_hash << " seed=" << header.seed
      << " method=" << header.method << " vut=" << header.vut << '\n';
  out << kCaseColumns << '\n';
  for (const auto& c : cases) {
    out << c.test.level << ',' << format_double(c.test.x_pov0) << ','
        << format_double(c.test.v_pov0) << ',' << format_double(c.test.psi) << ',' << c.batch
        << ',' << format_double(c.score) << ',' << (c.crashed ? 1 : 0) << '\n';
  }
}

void write_cases_csv(const std::filesystem::path& path, const CaseFileHeader& header,
                     const std::vector<CaseResult>& cases) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_cases_csv(out, header, cases);
}

CaseFile read_cases_csv(std::istream& in) {
  CaseFile file;
  std::string line;
  std::size_t number = 0;
  bool columns_seen = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (!columns_seen) file.header = parse_header(line);
      continue;
    }
    if (!columns_seen) {
      if (line != kCaseColumns) {
        throw FormatError("line " + std::to_string(number) + ": expected header '" +
                          std::string(kCaseColumns) + "'");
      }
      columns_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 7) {
      throw FormatError("line " + std::to_string(number) + ": expected 7 fields, got " +
                        std::to_string(f.size()));
    }
    CaseResult c;
    c.test.level = static_cast<int>(parse_int(f[0], number));
    if (c.test.level < 0 || c.test.level > 2) {
      throw FormatError("line " + std::to_string(number) + ": level must be 0, 1 or 2");
    }
    c.test.x_pov0 = parse_double(f[1], number);
    c.test.v_pov0 = parse_double(f[2], number);
    c.test.psi = parse_double(f[3], number);
    c.batch = static_cast<int>(parse_int(f[4], number));
    c.score = parse_double(f[5], number);
    const long long crashed = parse_int(f[6], number);
    if (crashed != 0 && crashed != 1) {
      throw FormatError("line " + std::to_string(number) + ": crashed must be 0 or 1");
    }
    c.crashed = crashed == 1;
    file.cases.push_back(c);
  }
  return file;
}

CaseFile read_cases_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return read_cases_csv(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<int> levels_in(const std::vector<CaseResult>& cases) {
  std::set<int> s;
  for (const auto& c : cases) s.insert(c.test.level);
  return {s.begin(), s.end()};
}

nlohmann::json fmc_to_json(const FmcResult& r) {
  nlohmann::json j = {{"M", r.coverage},
                      {"failing", r.failing},
                      {"dim", r.dim},
                      {"estimator", to_string(r.estimator)}};
  if (r.estimator == FmcEstimator::monte_carlo) {
    j["seed"] = r.seed;
    j["std_error"] = r.std_error;
    j["mc_points"] = r.mc_points;
  } else {
    j["seed"] = nullptr;
    j["std_error"] = 0.0;
  }
  return j;
}

nlohmann::json fmc_report(const std::vector<CaseResult>& cases, const std::vector<int>& levels,
                          const PoolRanges& pool, const FmcConfig& cfg) {
  nlohmann::json per_level = nlohmann::json::object();
  double pooled = 0.0;
  std::size_t failing = 0;
  for (int level : levels) {
    const FmcResult r = level_fmc(cases, level, pool, cfg);
    nlohmann::json j = fmc_to_json(r);
    j["cases"] = std::count_if(cases.begin(), cases.end(),
                               [&](const CaseResult& c) { return c.test.level == level; });
    per_level[std::to_string(level)] = std::move(j);
    pooled += r.coverage;
    failing += r.failing;
  }
  if (!levels.empty()) pooled /= static_cast<double>(levels.size());
  return {{"rho", cfg.rho},
          {"lambda", cfg.lambda},
          {"levels", std::move(per_level)},
          {"pooled", {{"M", pooled}, {"failing", failing}}}};
}

nlohmann::json campaign_summary(const CampaignRecord& record, const CaseFileHeader& header,
                                const PoolRanges& pool, const FmcConfig& cfg,
                                const std::string& timestamp) {
  nlohmann::json allocation = nlohmann::json::array();
  for (const auto& b : record.batches) {
    nlohmann::json row = {{"batch", b.index}, {"epsilon", b.epsilon}};
    nlohmann::json per = nlohmann::json::object();
    for (std::size_t k = 0; k < record.levels.size(); ++k) {
      per[std::to_string(record.levels[k])] = k < b.allocation.size() ? b.allocation[k] : 0;
    }
    row["allocation"] = std::move(per);
    if (!b.models.empty()) {
      nlohmann::json models = nlohmann::json::object();
      for (std::size_t k = 0; k < record.levels.size() && k < b.models.size(); ++k) {
        models[std::to_string(record.levels[k])] = b.models[k];
      }
      row["gpr"] = std::move(models);
    }
    allocation.push_back(std::move(row));
  }
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& t : record.fmc_trace) trace.push_back(t);

  return {{"config_hash", header.config_hash},
          {"seed", header.seed},
          {"method", header.method},
          {"vut", header.vut},
          {"levels", record.levels},
          {"cases", record.size()},
          {"batches", record.batches.size()},
          {"fmc", fmc_report(record.cases(), record.levels, pool, cfg)},
          {"allocation_history", std::move(allocation)},
          {"fmc_trace", std::move(trace)},
          {"generated_at", timestamp}};
}

std::vector<ComparisonRow> compare_case_files(const std::vector<std::string>& sources,
                                              const std::vector<CaseFile>& files,
                                              const PoolRanges& pool, const FmcConfig& cfg) {
  if (files.empty()) throw std::invalid_argument("compare needs at least one campaign output");
  if (sources.size() != files.size()) throw std::invalid_argument("one source name per file");
  std::set<std::string> vuts;
  for (const auto& f : files) {
    if (!f.header.vut.empty()) vuts.insert(f.header.vut);
  }
  if (vuts.size() > 1) {
    throw std::invalid_argument("campaign outputs are for different VUTs and cannot be compared");
  }
  std::map<int, std::vector<ComparisonRow>> by_level;
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (int level : levels_in(files[i].cases)) {
      const FmcResult r = level_fmc(files[i].cases, level, pool, cfg);
      ComparisonRow row;
      row.source = sources[i];
      row.method = files[i].header.method.empty() ? sources[i] : files[i].header.method;
      row.level = level;
      row.cases = static_cast<std::size_t>(
          std::count_if(files[i].cases.begin(), files[i].cases.end(),
                        [&](const CaseResult& c) { return c.test.level == level; }));
      row.failing = r.failing;
      row.fmc = r.coverage;
      by_level[level].push_back(row);
    }
  }
  std::vector<ComparisonRow> rows;
  for (auto& [level, list] : by_level) rows.insert(rows.end(), list.begin(), list.end());
  return rows;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "level,method,source,cases,failing,fmc\n";
  for (const auto& r : rows) {
    out << r.level << ',' << r.method << ',' << r.source << ',' << r.cases << ',' << r.failing
        << ',' << format_double(r.fmc) << '\n';
  }
}

void write_comparison_table(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  std::map<int, std::vector<const ComparisonRow*>> by_level;
  for (const auto& r : rows) by_level[r.level].push_back(&r);
  for (const auto& [level, list] : by_level) {
    out << "level " << level << '\n';
    out << "  " << std::left << std::setw(14) << "method" << std::right << std::setw(8)
        << "cases" << std::setw(9) << "failing" << std::setw(10) << "FMC" << '\n';
    double best = -1.0;
    for (const auto* r : list) best = std::max(best, r->fmc);
    for (const auto* r : list) {
      out << "  " << std::left << std::setw(14) << r->method << std::right << std::setw(8)
          << r->cases << std::setw(9) << r->failing << std::setw(10) << std::fixed
          << std::setprecision(4) << r->fmc;
      if (list.size() > 1 && r->fmc == best) out << "  *";
      out << '\n';
      out.unsetf(std::ios::floatfield);
    }
  }
}

}  // namespace mergetest
