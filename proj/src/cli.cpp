#include "mergetest/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "mergetest/config.hpp"
#include "mergetest/errors.hpp"
#include "mergetest/hash.hpp"
#include "mergetest/report.hpp"
#include "mergetest/scenario.hpp"

namespace mergetest {

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string method = "gpr";
  std::vector<int> levels;
  std::string vut;
  std::string out;
  int jobs = 1;
  std::string library;
};

CampaignConfig load_config(const std::string& path) {
  if (path.empty()) {
    CampaignConfig c;
    c.validate();
    return c;
  }
  return load_campaign_config(path);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

VutSelection resolve_vut(const std::string& select, const CampaignConfig& cfg) {
  VutSelection v;
  v.label = select;
  if (select == "rb1") {
    v.kind = VutSelection::Kind::rule_based;
    v.rule_based = cfg.vut.design1;
  } else if (select == "rb2") {
    v.kind = VutSelection::Kind::rule_based;
    v.rule_based = cfg.vut.design2;
  } else if (select == "level0") {
    v.kind = VutSelection::Kind::level0;
  } else {
    v.kind = VutSelection::Kind::policy;
    v.policy = load_policy(select);
    if (v.policy->role != Role::vut) {
      throw InterfaceError("policy " + select + " is not a VUT policy");
    }
    v.label = std::filesystem::path(select).filename().string();
  }
  return v;
}

std::filesystem::path library_manifest(const CommonOptions& o, const CampaignConfig& cfg) {
  return o.library.empty() ? cfg.library : std::filesystem::path(o.library);
}

ScenarioSetup setup_of(const CampaignConfig& cfg) {
  return {cfg.scenario, cfg.rewards, cfg.weights, cfg.shape};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_train(const CommonOptions& o, std::ostream& out) {
  CampaignConfig cfg = load_config(o.config);
  LibraryConfig lib = library_config(cfg);
  if (o.seed) {
    lib.pov1.seed = *o.seed;
    lib.vut1.seed = *o.seed + 1;
    lib.pov2.seed = *o.seed + 2;
  }
  const std::filesystem::path dir =
      o.out.empty() ? library_manifest(o, cfg).parent_path() : std::filesystem::path(o.out);
  const LibraryBuildReport report = build_pov_library(lib, dir.empty() ? "." : dir, &std::cerr);
  out << report.manifest.string() << '\n';
  return 0;
}

int cmd_campaign(const CommonOptions& o, std::ostream& out) {
  CampaignConfig cfg = load_config(o.config);
  if (o.seed) cfg.sampler.seed = *o.seed;
  if (!o.levels.empty()) cfg.sampler.levels = o.levels;
  if (!o.vut.empty()) cfg.vut.select = o.vut;
  cfg.validate();
  if (o.out.empty()) throw std::invalid_argument("campaign needs --out <directory>");
  if (o.jobs < 1) throw std::invalid_argument("--jobs must be >= 1");
  const CampaignMethod method = campaign_method_from_string(o.method);

  auto library = std::make_shared<const PovLibrary>(load_pov_library(library_manifest(o, cfg)));
  auto vut = std::make_shared<const VutSelection>(resolve_vut(cfg.vut.select, cfg));
  const CaseScorer scorer = make_case_scorer(library, vut, setup_of(cfg));
  const CampaignOptions options{o.jobs, true};

  CampaignRecord record;
  switch (method) {
    case CampaignMethod::gpr:
      record = run_adaptive_campaign(scorer, cfg.sampler, cfg.pool, cfg.fmc, options);
      break;
    case CampaignMethod::uniform:
      record = uniform_campaign(scorer, cfg.sampler, cfg.pool, options);
      break;
    case CampaignMethod::annealing:
      record = annealing_campaign(scorer, cfg.sampler, cfg.annealing, cfg.pool, options);
      break;
    case CampaignMethod::subset:
      record = subset_campaign(scorer, cfg.sampler, cfg.subset, cfg.pool, options);
      break;
    case CampaignMethod::ground_truth: {
      std::vector<int> counts;
      for (int level : cfg.sampler.levels) counts.push_back(cfg.ground_truth.cases_for(level));
      record = ground_truth_campaign(scorer, cfg.sampler.levels, counts, cfg.sampler.seed,
                                     cfg.sampler.batch, cfg.pool, options);
      break;
    }
  }

  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  const CaseFileHeader header{config_hash(cfg), cfg.sampler.seed, to_string(method), vut->label};
  write_cases_csv(dir / "cases.csv", header, record.cases());
  const nlohmann::json summary =
      campaign_summary(record, header, cfg.pool, cfg.fmc, utc_timestamp());
  write_json(dir / "summary.json", summary);

  out << to_string(method) << " vut=" << vut->label << " seed=" << cfg.sampler.seed
      << " cases=" << record.size();
  for (const auto& [level, r] : summary["fmc"]["levels"].items()) {
    out << " M[" << level << "]=" << r["M"].get<double>() << " (" << r["failing"].get<std::size_t>()
        << " failing)";
  }
  out << '\n';
  return 0;
}

int cmd_fmc(const CommonOptions& o, const std::string& cases_path, std::optional<double> rho,
            std::optional<double> lambda, std::ostream& out) {
  CampaignConfig cfg = load_config(o.config);
  if (rho) cfg.fmc.rho = *rho;
  if (lambda) cfg.fmc.lambda = *lambda;
  cfg.fmc.validate();
  const CaseFile file = read_cases_csv(std::filesystem::path(cases_path));
  std::vector<int> levels = o.levels.empty() ? levels_in(file.cases) : o.levels;
  nlohmann::json report = fmc_report(file.cases, levels, cfg.pool, cfg.fmc);
  report["source"] = {{"path", cases_path},
                      {"config_hash", file.header.config_hash},
                      {"seed", file.header.seed},
                      {"method", file.header.method},
                      {"vut", file.header.vut}};
  report["fmc_config_hash"] = fnv1a64_hex(to_json(cfg.fmc).dump());
  if (o.out.empty()) {
    out << report.dump(2) << '\n';
  } else {
    write_json(o.out, report);
  }
  return 0;
}

int cmd_compare(const CommonOptions& o, const std::vector<std::string>& inputs,
                std::ostream& out) {
  CampaignConfig cfg = load_config(o.config);
  std::vector<CaseFile> files;
  for (const auto& p : inputs) files.push_back(read_cases_csv(std::filesystem::path(p)));
  const auto rows = compare_case_files(inputs, files, cfg.pool, cfg.fmc);
  write_comparison_table(out, rows);
  if (!o.out.empty()) {
    std::ofstream csv(o.out, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + o.out);
    csv << "# fmc_config_hash=" << fnv1a64_hex(to_json(cfg.fmc).dump()) << " inputs=";
    for (std::size_t i = 0; i < files.size(); ++i) {
      csv << (i ? ";" : "") << files[i].header.config_hash << ':' << files[i].header.seed;
    }
    csv << '\n';
    write_comparison_csv(csv, rows);
  }
  return 0;
}

int cmd_trajectory(const CommonOptions& o, double x_pov0, double v_pov0, double psi,
                   std::ostream& out) {
  CampaignConfig cfg = load_config(o.config);
  if (!o.vut.empty()) cfg.vut.select = o.vut;
  const int level = o.levels.empty() ? 1 : o.levels.front();
  const PovLibrary library = load_pov_library(library_manifest(o, cfg));
  const VutSelection vut = resolve_vut(cfg.vut.select, cfg);
  TestCase test{x_pov0, v_pov0, psi, level};
  const EpisodeOutcome outcome = run_case(library, vut, setup_of(cfg), test);
  const ScoreBreakdown score = score_episode(outcome, cfg.weights, cfg.shape);

  std::ostringstream csv;
  csv << "# config_hash=" << config_hash(cfg) << " seed=0 vut=" << vut.label
      << " level=" << level << " x_pov0=" << x_pov0 << " v_pov0=" << v_pov0 << " psi=" << psi
      << " P=" << score.total << " crashed=" << (score.crashed ? 1 : 0) << '\n';
  write_trajectory_csv(csv, outcome.trajectory, cfg.scenario.dt);
  if (o.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + o.out);
    f << csv.str();
  }
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ChecksumError*>(&e)) return "checksum";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const TrainingDivergence*>(&e)) return "training_divergence";
  if (dynamic_cast<const IllConditionedError*>(&e)) return "ill_conditioned";
  if (dynamic_cast<const SimulationFault*>(&e)) return "simulation_fault";
  if (dynamic_cast<const InterfaceError*>(&e)) return "interface";
  if (dynamic_cast<const ProtocolError*>(&e)) return "protocol";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
  return "runtime";
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Adaptive testing of a highway-merge vehicle under test", "mergetest");
  app.require_subcommand(1);
  CommonOptions o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Campaign config (JSON)")->check(CLI::ExistingFile);
  };
  auto add_library = [&](CLI::App* sub) {
    sub->add_option("--library", o.library, "POV library manifest (overrides the config)");
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { o.seed = s; },
                                            "RNG seed");
  };

  CLI::App* train = app.add_subcommand("train", "Train or reuse the POV library");
  add_config(train);
  add_seed(train);
  add_library(train);
  train->add_option("--out", o.out, "Library directory");

  CLI::App* campaign = app.add_subcommand("campaign", "Run a test campaign");
  add_config(campaign);
  add_seed(campaign);
  add_library(campaign);
  campaign->add_option("--method", o.method, "gpr, uniform, sa, subset or ground-truth");
  campaign->add_option("--level", o.levels, "POV levels, e.g. 1 or 0,1,2")->delimiter(',');
  campaign->add_option("--vut", o.vut, "rb1, rb2, level0 or a VUT policy file");
  campaign->add_option("--out", o.out, "Output directory")->required();
  campaign->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);

  std::string cases_path;
  std::optional<double> rho, lambda;
  CLI::App* fmc_cmd = app.add_subcommand("fmc", "Failure-mode coverage of a case CSV");
  add_config(fmc_cmd);
  fmc_cmd->add_option("cases", cases_path, "Case CSV")->required()->check(CLI::ExistingFile);
  fmc_cmd->add_option("--level", o.levels, "Levels to report")->delimiter(',');
  fmc_cmd->add_option_function<double>("--rho", [&](const double& v) { rho = v; }, "Ball radius");
  fmc_cmd->add_option_function<double>("--lambda", [&](const double& v) { lambda = v; },
                                       "Failure threshold");
  fmc_cmd->add_option("--out", o.out, "Report path (default stdout)");

  std::vector<std::string> inputs;
  CLI::App* compare = app.add_subcommand("compare", "Compare campaign outputs");
  add_config(compare);
  compare->add_option("inputs", inputs, "Case CSVs")->required()->check(CLI::ExistingFile);
  compare->add_option("--out", o.out, "Comparison CSV path");

  double x_pov0 = -273.0, v_pov0 = 33.0, psi = 0.0;
  CLI::App* trajectory = app.add_subcommand("trajectory", "Dump one episode as CSV");
  add_config(trajectory);
  add_library(trajectory);
  trajectory->add_option("--level", o.levels, "POV level")->expected(1);
  trajectory->add_option("--vut", o.vut, "rb1, rb2, level0 or a VUT policy file");
  trajectory->add_option("--x-pov0", x_pov0, "Initial POV position (m)");
  trajectory->add_option("--v-pov0", v_pov0, "Initial POV speed (m/s)");
  trajectory->add_option("--psi", psi, "SVO angle (rad, level 2)");
  trajectory->add_option("--out", o.out, "CSV path (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (campaign->parsed()) return cmd_campaign(o, out);
    if (fmc_cmd->parsed()) return cmd_fmc(o, cases_path, rho, lambda, out);
    if (compare->parsed()) return cmd_compare(o, inputs, out);
    if (trajectory->parsed()) return cmd_trajectory(o, x_pov0, v_pov0, psi, out);
  } catch (const std::exception& e) {
    report_error(err, error_kind(e), e.what());
    return 1;
  }
  return 0;
}

}  // namespace mergetest
