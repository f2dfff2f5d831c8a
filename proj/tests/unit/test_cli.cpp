#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mergetest/cli.hpp"
#include "mergetest/report.hpp"
#include "mergetest/trainer.hpp"

using namespace mergetest;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mergetest_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kColumns = "level,x_pov0,v_pov0,psi,batch,P,crashed\n";

// A small library trained once for every test in this file.
const std::filesystem::path& tiny_library() {
  static const std::filesystem::path manifest = [] {
    const auto dir = scratch("library");
    LibraryConfig cfg;
    for (TrainerConfig* t : {&cfg.pov1, &cfg.vut1, &cfg.pov2}) {
      t->episodes = 2;
      t->warmup_steps = 50;
      t->target_sync_steps = 40;
      t->epsilon_decay_steps = 200;
      t->hidden = {8, 8};
    }
    return build_pov_library(cfg, dir).manifest;
  }();
  return manifest;
}

std::filesystem::path small_config(const std::filesystem::path& dir) {
  const json j = {{"sampler", {{"N", 40}, {"n", 10}, {"p", 200}}},
                  {"fmc", {{"mc_points", 2000}}}};
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump();
  return path;
}

}  // namespace

TEST_CASE("usage errors exit 2 with a JSON error") {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"bogus"}, {"campaign"}, {"fmc", "/nonexistent/cases.csv"}}) {
    const Run r = cli(args);
    CHECK(r.code == 2);
    const json e = json::parse(r.err);
    CHECK(e["error"]["kind"] == "usage");
  }
}

TEST_CASE("runtime failures exit 1 with a typed JSON error") {
  const auto dir = scratch("errors");
  std::ofstream(dir / "bad.csv") << "level,x\n";
  const Run r = cli({"fmc", (dir / "bad.csv").string()});
  CHECK(r.code == 1);
  CHECK(json::parse(r.err)["error"]["kind"] == "format");

  const Run m = cli({"campaign", "--method", "magic", "--out", (dir / "o").string(), "--library",
                     tiny_library().string()});
  CHECK(m.code == 1);
  CHECK(json::parse(m.err)["error"].contains("message"));
}

TEST_CASE("fmc of an empty case file is zero") {
  const auto dir = scratch("empty");
  std::ofstream(dir / "cases.csv") << "# seed=0\n" << kColumns;
  const Run r = cli({"fmc", (dir / "cases.csv").string(), "--level", "1"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["levels"]["1"]["M"].get<double>() == 0.0);
  CHECK(j["levels"]["1"]["cases"].get<int>() == 0);
}

TEST_CASE("fmc with a zero radius reports zero coverage") {
  const auto dir = scratch("rho0");
  std::ofstream(dir / "cases.csv") << kColumns << "1,-275,27.5,0,1,-2000,1\n";
  const Run r = cli({"fmc", (dir / "cases.csv").string(), "--rho", "0"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["levels"]["1"]["failing"].get<int>() == 1);
  CHECK(j["levels"]["1"]["M"].get<double>() == 0.0);
}

TEST_CASE("trajectory writes a header line and one row per step") {
  const Run r = cli({"trajectory", "--library", tiny_library().string(), "--level", "0",
                     "--vut", "level0", "--x-pov0", "-250", "--v-pov0", "25"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string header, columns;
  std::getline(in, header);
  std::getline(in, columns);
  CHECK(header.rfind("# config_hash=", 0) == 0);
  CHECK(header.find("vut=level0") != std::string::npos);
  CHECK(columns.find("x_vut") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(in, line);) rows += line.empty() ? 0 : 1;
  CHECK(rows > 1);
  CHECK(rows <= 601);
}

TEST_CASE("campaign output does not depend on the worker count") {
  const auto dir = scratch("campaign");
  const auto config = small_config(dir);
  std::vector<std::string> csvs;
  for (const std::string jobs : {"1", "3"}) {
    const auto out = dir / ("jobs" + jobs);
    const Run r = cli({"campaign", "--config", config.string(), "--library",
                       tiny_library().string(), "--level", "0,1", "--seed", "7", "--jobs", jobs,
                       "--out", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(std::filesystem::exists(out / "summary.json"));
    csvs.push_back(slurp(out / "cases.csv"));
    const json s = json::parse(slurp(out / "summary.json"));
    CHECK(s["cases"].get<int>() == 40);
    CHECK(s["method"] == "gpr");
  }
  CHECK(csvs[0] == csvs[1]);

  const Run cmp = cli({"compare", (dir / "jobs1" / "cases.csv").string(),
                       (dir / "jobs3" / "cases.csv").string(), "--out",
                       (dir / "cmp.csv").string()});
  REQUIRE(cmp.code == 0);
  CHECK(cmp.out.find("level 0") != std::string::npos);
  CHECK(slurp(dir / "cmp.csv").find("level,method,source") != std::string::npos);
}
