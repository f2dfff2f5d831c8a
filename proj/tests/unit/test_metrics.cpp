#include <cmath>
#include <limits>

#include "doctest.h"
#include "generators.hpp"
#include "mergetest/agents.hpp"
#include "mergetest/metrics.hpp"
#include "mergetest/rewards.hpp"

using namespace mergetest;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const ScoreWeights kWeights{};

EpisodeOutcome merged_outcome(double dx1, double ttc, double v_end, double accel) {
  EpisodeOutcome o;
  TrajectoryStep st;
  st.a_vut = accel;
  o.trajectory.steps.assign(50, st);
  o.trajectory.terminal = State{dx1, v_end, 0.0, v_end};
  o.safety.dx1 = dx1;
  o.safety.ttc = ttc;
  o.safety.crashed = std::abs(dx1) < 6.0;
  return o;
}

std::vector<ScoredPoint> failing_1d(std::initializer_list<double> xs) {
  std::vector<ScoredPoint> out;
  for (double x : xs) out.push_back({{x}, -1000.0});
  return out;
}

std::vector<ScoredPoint> random_points(std::mt19937_64& rng, int n, int dim) {
  std::vector<ScoredPoint> pts;
  for (int i = 0; i < n; ++i) {
    pts.push_back({testgen::unit_point(rng, dim), testgen::uniform(rng, -1200.0, 200.0)});
  }
  return pts;
}

}  // namespace

TEST_CASE("score of a crash falls below the failure threshold") {
  const auto b = score_episode(merged_outcome(3.0, 0.5, 28.0, 0.5), kWeights);
  CHECK(b.crashed);
  CHECK(b.total < -500.0);
}

TEST_CASE("ideal outcome earns the maximum score") {
  const auto b = score_episode(merged_outcome(-120.0, kInf, 28.0, 0.5), kWeights);
  CHECK(b.safety == 1.0);
  CHECK(b.task == 1.0);
  CHECK(b.total == kWeights.safety + kWeights.task);
}

TEST_CASE("short time to collision costs safety but is no failure") {
  const auto b = score_episode(merged_outcome(40.0, 3.5, 28.0, 0.5), kWeights);
  CHECK_FALSE(b.crashed);
  CHECK(b.safety < score_episode(merged_outcome(40.0, kInf, 28.0, 0.5), kWeights).safety);
  CHECK(b.total > -500.0);
}

TEST_CASE("timeout is a task failure") {
  EpisodeOutcome o = merged_outcome(-50.0, kInf, 0.0, -4.0);
  o.terminated_by = Termination::timeout;
  CHECK(score_episode(o, kWeights).task == -1.0);
}

TEST_CASE("score weights") {
  CHECK(kWeights.separates(-500.0));
  ScoreWeights weak;
  weak.crash = -300.0;
  CHECK_FALSE(weak.separates(-500.0));
  CHECK_THROWS(ScoreWeights{1.0, 100.0, 100.0}.validate());
}

TEST_CASE("property: crash and score threshold agree on random outcomes") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10000; ++trial) {
    EpisodeOutcome o = merged_outcome(testgen::uniform(rng, -150.0, 150.0),
                                      testgen::integer(rng, 0, 2) ? testgen::uniform(rng, 0.0, 20.0) : kInf,
                                      testgen::uniform(rng, 0.0, 40.0), testgen::uniform(rng, -4.0, 2.0));
    if (testgen::integer(rng, 0, 9) == 0) o.terminated_by = Termination::timeout;
    const double p = performance_score(o, kWeights);
    CHECK(o.safety.crashed == (p < -500.0));
  }
}

TEST_CASE("score ignores anything after the recorded episode") {
  EpisodeOutcome o = merged_outcome(30.0, 9.0, 26.0, 0.5);
  const double before = performance_score(o, kWeights);
  o.trajectory.steps.back().state = State{123.0, 4.0, 5.0, 6.0};
  CHECK(performance_score(o, kWeights) == before);
}

TEST_CASE("interval union") {
  const std::vector<double> worked{0.10, 0.12, 0.50};
  CHECK(exact_union_1d(worked, 0.05) == doctest::Approx(0.22).epsilon(1e-14));
  const std::vector<double> single{0.5};
  CHECK(exact_union_1d(single, 0.05) == doctest::Approx(0.10).epsilon(1e-14));
  const std::vector<double> edge{0.0};
  CHECK(exact_union_1d(edge, 0.05) == doctest::Approx(0.05).epsilon(1e-14));
  const std::vector<double> both_edges{0.0, 1.0};
  CHECK(exact_union_1d(both_edges, 0.6) == 1.0);
}

TEST_CASE("FMC of scored cases") {
  FmcConfig cfg;
  const auto worked = failing_1d({0.10, 0.12, 0.50});
  const FmcResult r = fmc(worked, cfg);
  CHECK(r.coverage == doctest::Approx(0.22).epsilon(1e-14));
  CHECK(r.failing == 3);
  CHECK(r.estimator == FmcEstimator::exact_1d);

  std::vector<ScoredPoint> passing{{{0.3}, 50.0}, {{0.7}, -499.0}};
  CHECK(fmc(passing, cfg).coverage == 0.0);
  CHECK(fmc(std::vector<ScoredPoint>{}, cfg).coverage == 0.0);

  std::vector<ScoredPoint> mixed{{{0.3}, -900.0}, {{0.2, 0.4}, -900.0}};
  CHECK_THROWS_AS(fmc(mixed, cfg), std::invalid_argument);
  cfg.estimator = FmcEstimator::exact_1d;
  std::vector<ScoredPoint> planar{{{0.3, 0.3}, -900.0}};
  CHECK_THROWS_AS(fmc(planar, cfg), std::invalid_argument);
}

TEST_CASE("Monte-Carlo union volume agrees with the exact interval union") {
  std::mt19937_64 rng(2);
  int within = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<double>> centres;
    std::vector<double> xs;
    const int n = testgen::integer(rng, 1, 12);
    for (int i = 0; i < n; ++i) {
      xs.push_back(testgen::uniform(rng, 0.0, 1.0));
      centres.push_back({xs.back()});
    }
    const double rho = testgen::uniform(rng, 0.005, 0.1);
    const FmcResult mc = union_volume_monte_carlo(centres, 1, rho, 1000000, 100 + trial);
    const double exact = exact_union_1d(xs, rho);
    if (std::abs(mc.coverage - exact) <= 3.0 * mc.std_error) ++within;
  }
  CHECK(within == 100);
}

TEST_CASE("Monte-Carlo and grid estimates agree in the plane") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> centres;
    for (int i = 0; i < 15; ++i) centres.push_back(testgen::unit_point(rng, 2));
    const FmcResult mc = union_volume_monte_carlo(centres, 2, 0.05, 400000, 7);
    const double grid = union_volume_grid_2d(centres, 0.05, 1000);
    CHECK(std::abs(mc.coverage - grid) <= 4.0 * mc.std_error + 1e-3);
  }
  // A ball in the middle of the square has area pi rho^2.
  const double disc = union_volume_grid_2d({{0.5, 0.5}}, 0.1, 2000);
  CHECK(disc == doctest::Approx(3.14159265 * 0.01).epsilon(1e-3));
}

TEST_CASE("Monte-Carlo estimate does not depend on the worker count") {
  std::mt19937_64 rng(4);
  std::vector<std::vector<double>> centres;
  for (int i = 0; i < 30; ++i) centres.push_back(testgen::unit_point(rng, 3));
  const FmcResult one = union_volume_monte_carlo(centres, 3, 0.05, 200000, 11, 1);
  const FmcResult four = union_volume_monte_carlo(centres, 3, 0.05, 200000, 11, 4);
  CHECK(one.coverage == four.coverage);
  CHECK(one.seed == 11);
  CHECK(one.mc_points == 200000);
}

TEST_CASE("property: FMC monotonicity") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = testgen::integer(rng, 1, 3);
    FmcConfig cfg;
    cfg.rho = testgen::uniform(rng, 0.01, 0.2);
    cfg.mc_points = 4000;
    cfg.mc_seed = static_cast<std::uint64_t>(trial);
    auto pts = random_points(rng, testgen::integer(rng, 0, 15), dim);

    const double base = fmc(pts, cfg).coverage;
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);

    auto more = pts;
    more.push_back({testgen::unit_point(rng, dim), -1000.0});
    CHECK(fmc(more, cfg).coverage >= base);

    FmcConfig stricter = cfg;
    stricter.lambda = cfg.lambda - testgen::uniform(rng, 0.0, 600.0);
    CHECK(fmc(pts, stricter).coverage <= base);

    FmcConfig point = cfg;
    point.rho = 0.0;
    CHECK(fmc(more, point).coverage == 0.0);
  }
}

TEST_CASE("FMC configuration checks") {
  FmcConfig cfg;
  CHECK(cfg.rho == 0.05);
  CHECK(cfg.lambda == -500.0);
  cfg.rho = -1.0;
  CHECK_THROWS(cfg.validate());
  CHECK(fmc_estimator_from_string(to_string(FmcEstimator::grid_2d)) == FmcEstimator::grid_2d);
  CHECK_THROWS(fmc_estimator_from_string("exact"));
}
