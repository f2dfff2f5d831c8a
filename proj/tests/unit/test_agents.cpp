#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "generators.hpp"
#include "mergetest/agents.hpp"
#include "mergetest/errors.hpp"
#include "mergetest/rewards.hpp"

using namespace mergetest;

namespace {

// Brute-force arrival gap: constant-speed POV, level-0 VUT, stepped with the
// simulator; the crossing time is interpolated within the final step.
double rollout_gap(State s) {
  const ScenarioConfig cfg;
  const double x_pov0 = s.x_pov;
  double t = 0.0;
  for (int k = 0; k < 100000 && s.x_vut < 0.0; ++k) {
    const State next = step_dynamics(s, Action::coast(), level0_vut_action(s), cfg);
    if (next.x_vut >= 0.0) {
      t += cfg.dt * (-s.x_vut) / (next.x_vut - s.x_vut);
      break;
    }
    t += cfg.dt;
    s = next;
  }
  return x_pov0 + s.v_pov * t;
}

QPolicy random_policy(Role role, int level, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return QPolicy(role, level, Mlp({QPolicy::input_dim_for(role, level), 16, 16, kNumActions}, rng));
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mergetest_agents_" + name);
}

}  // namespace

TEST_CASE("level-0 POV never accelerates") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) CHECK(level0_pov_action(testgen::state(rng)).accel() == 0.0);
  CHECK(level0_pov_action({-100.0, 0.0, -10.0, 5.0}).accel() == 0.0);
  CHECK(level0_pov_action({-1.0, 30.0, -1.0, 30.0}).accel() == 0.0);
}

TEST_CASE("level-0 VUT ramps to cruise speed") {
  CHECK(level0_vut_action({-273.0, 33.0, -182.0, 18.0}).accel() == 1.0);
  CHECK(level0_vut_action({-273.0, 33.0, -50.0, 28.0}).accel() == 0.0);
  const State s{-273.0, 33.0, -100.0, 27.95};
  const Action a = level0_vut_action(s);
  CHECK(a.accel() == 1.0);
  CHECK(step_dynamics(s, Action::coast(), a, ScenarioConfig{}).v_vut == 28.0);
}

TEST_CASE("predicted gap at the merge point") {
  CHECK(predict_gap_at_merge({-273.0, 33.0, -140.0, 28.0}) == doctest::Approx(-108.0));
  CHECK(predict_gap_at_merge({-42.0, 33.0, 0.0, 10.0}) == -42.0);
  Level0VutProfile still{0.0, 28.0};
  CHECK(std::isinf(predict_gap_at_merge({-42.0, 33.0, -10.0, 0.0}, still)));
  const State start{-273.0, 33.0, -182.0, 18.0};
  CHECK(std::abs(predict_gap_at_merge(start) - rollout_gap(start)) <= 33.0 * 0.1);
}

TEST_CASE("property: gap prediction agrees with a rollout within one step") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    State s = testgen::state(rng);
    s.x_vut = testgen::uniform(rng, -200.0, -1.0);
    s.v_vut = testgen::uniform(rng, 1.0, 35.0);
    CHECK(std::abs(predict_gap_at_merge(s) - rollout_gap(s)) <= s.v_pov * 0.1 + 1e-9);
  }
}

TEST_CASE("greedy tie-break") {
  const std::vector<double> unique{1, 2, 3, 0, 0, 0, 0};
  CHECK(greedy_index(unique) == 2);
  const std::vector<double> flat(7, 0.5);
  CHECK(greedy_index(flat) == 0);
  const std::vector<double> tie{0, 4, 1, 4, 0, 0, 0};
  CHECK(greedy_index(tie) == 1);
}

TEST_CASE("SVO input contract") {
  const QPolicy level1 = random_policy(Role::pov, 1, 3);
  const QPolicy level2 = random_policy(Role::pov, 2, 4);
  const State s{-273.0, 33.0, -182.0, 18.0};
  CHECK_FALSE(level1.takes_psi());
  CHECK(level2.takes_psi());
  CHECK_NOTHROW(q_policy_action(level1, s, std::nullopt));
  CHECK_THROWS_AS(q_policy_action(level1, s, 0.6), InterfaceError);
  CHECK_THROWS_AS(q_policy_action(level2, s, std::nullopt), InterfaceError);
  CHECK_NOTHROW(q_policy_action(level2, s, 0.6));
  CHECK(level2.encode(s, 0.6).size() == 5);
  CHECK(level2.encode(s, 0.6)(4) == doctest::Approx(0.6 / (3.14159265358979 / 2)));
  CHECK(level1.encode(s, std::nullopt)(0) == doctest::Approx(-273.0 / 400.0));
  CHECK(level1.encode(s, std::nullopt)(1) == doctest::Approx(33.0 / 40.0));
  CHECK(q_policy_action(level1, s, std::nullopt).index ==
        greedy_index(level1.q_values(s, std::nullopt)));
}

TEST_CASE("rule-based VUT stages") {
  RuleBasedVutConfig cfg = RuleBasedVutConfig::design1();
  CHECK_NOTHROW(cfg.validate(-182.0));

  SUBCASE("far from M follows the level-0 profile") {
    RuleBasedVut vut(cfg);
    // POV right next to the predicted merge slot, but stage 1 ignores it.
    State s{-182.0, 18.0, -182.0, 18.0};
    CHECK(vut.act(s).accel() == 1.0);
    CHECK(vut.stage() == 1);
  }
  SUBCASE("stage 2 keeps the profile when the predicted gap is wide") {
    State s{0.0, 33.0, -100.0, 20.0};
    s.x_pov = (cfg.dx_safe + 10.0) - predict_gap_at_merge(s);
    REQUIRE(predict_gap_at_merge(s) == doctest::Approx(cfg.dx_safe + 10.0));
    RuleBasedVut vut(cfg);
    CHECK(vut.act(s).accel() == 1.0);
    CHECK(vut.stage() == 2);
  }
  SUBCASE("stage 2 coasts when the predicted gap is small") {
    State s{0.0, 33.0, -100.0, 20.0};
    s.x_pov = 2.0 - predict_gap_at_merge(s);
    RuleBasedVut vut(cfg);
    CHECK(vut.act(s).accel() == 0.0);
    CHECK(vut.stage() == 2);
  }
  SUBCASE("stage 3 brakes to open a gap behind a POV that is just ahead") {
    State s{0.0, 30.0, -8.0, 25.0};
    s.x_pov = 2.0 - predict_gap_at_merge(s);
    RuleBasedVut vut(cfg);
    CHECK(vut.act(s).accel() < 0.0);
    CHECK(vut.stage() == 3);
  }
}

TEST_CASE("rule-based configuration checks") {
  RuleBasedVutConfig cfg = RuleBasedVutConfig::design2();
  CHECK(cfg.x_rb1 > RuleBasedVutConfig::design1().x_rb1);
  CHECK(cfg.x_rb2 > RuleBasedVutConfig::design1().x_rb2);
  cfg.x_rb2 = cfg.x_rb1 + 1.0;
  CHECK_THROWS(cfg.validate(-182.0));
  cfg = RuleBasedVutConfig::design1();
  cfg.x_rb1 = 200.0;
  CHECK_THROWS(cfg.validate(-182.0));
}

TEST_CASE("property: rule-based stage never decreases") {
  std::mt19937_64 rng(5);
  const ScenarioConfig scenario;
  for (int trial = 0; trial < 200; ++trial) {
    RuleBasedVut vut(trial % 2 ? RuleBasedVutConfig::design1() : RuleBasedVutConfig::design2());
    State s{testgen::uniform(rng, -400.0, -150.0), testgen::uniform(rng, 20.0, 35.0), -182.0, 18.0};
    int stage = vut.stage();
    for (int k = 0; k < scenario.max_steps() && s.x_vut < 0.0; ++k) {
      const Action a = vut.act(s);
      CHECK(vut.stage() >= stage);
      stage = vut.stage();
      s = step_dynamics(s, Action::from_index(testgen::integer(rng, 2, 6)), a, scenario);
    }
  }
}

TEST_CASE("policy file round trip") {
  StoredPolicy stored;
  stored.role = Role::pov;
  stored.level = 2;
  stored.network = random_policy(Role::pov, 2, 9);
  stored.metadata = {{"seed", 9}};
  const auto path = temp_file("roundtrip.json");
  save_policy(path, stored);
  const StoredPolicy loaded = load_policy(path);
  REQUIRE(loaded.network);
  CHECK(loaded.role == Role::pov);
  CHECK(loaded.level == 2);
  CHECK(loaded.metadata == stored.metadata);
  CHECK(loaded.network->network() == stored.network->network());

  std::mt19937_64 rng(10);
  for (int i = 0; i < 1000; ++i) {
    const State s = testgen::state(rng);
    const double psi = testgen::uniform(rng, 0.0, 1.5);
    CHECK(q_policy_action(*loaded.network, s, psi) == q_policy_action(*stored.network, s, psi));
  }
  std::filesystem::remove(path);
}

TEST_CASE("level-0 policy files carry no network") {
  StoredPolicy stored;
  stored.role = Role::vut;
  const StoredPolicy loaded = policy_from_json(policy_to_json(stored));
  CHECK_FALSE(loaded.network);
  CHECK(loaded.role == Role::vut);
  const PolicyFn fn = bind_policy(loaded);
  CHECK(fn({-100.0, 30.0, -100.0, 18.0}).accel() == 1.0);
}

TEST_CASE("edited policy file fails its checksum") {
  StoredPolicy stored;
  stored.role = Role::pov;
  stored.level = 1;
  stored.network = random_policy(Role::pov, 1, 12);
  nlohmann::json j = policy_to_json(stored);
  j["layers"][0]["bias"][0] = j["layers"][0]["bias"][0].get<double>() + 1.0;
  CHECK_THROWS_AS(policy_from_json(j), ChecksumError);

  const auto path = temp_file("corrupt.json");
  save_policy(path, stored);
  {
    std::fstream f(path, std::ios::in | std::ios::out);
    f.seekp(10);
    f.put('#');
  }
  CHECK_THROWS_AS(load_policy(path), ChecksumError);
  std::filesystem::remove(path);

  nlohmann::json wrong = policy_to_json(stored);
  wrong["format"] = "something-else";
  CHECK_THROWS_AS(policy_from_json(wrong), FormatError);
}
