#pragma once

// Per-case performance score and failure-mode coverage (FMC).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mergetest/rewards.hpp"
#include "mergetest/sim.hpp"

namespace mergetest {

struct ScoreWeights {
  double crash = -1000.0;  // mu1
  double safety = 100.0;   // mu2
  double task = 100.0;     // mu3

  void validate() const;
  // True when the bounded sub-scores can never move a score across `lambda`:
  // every crash scores below it and every non-crash above it.
  bool separates(double lambda) const;
};

// Breakpoints of the bounded sub-scores.
struct ScoreShape {
  double ttc_min = 7.0;         // TTC scoring 0; 0 s scores -1, 2*ttc_min or more +1
  double gap_crash = 6.0;       // |dx1| at or below scores -1
  double gap_critical = 15.0;   // |dx1| scoring 0
  double gap_good = 100.0;      // |dx1| at or above scores +1
  double speed_band_min = 24.6;
  double speed_band_max = 35.0;
  double speed_tolerance = 10.0;  // band deviation that scores -1
  double comfort_accel = 1.0;     // mean |a| with no penalty
  double harsh_accel = 3.0;       // mean |a| scoring -1

  static ScoreShape from_rewards(const RewardParams& p);
};

struct ScoreBreakdown {
  bool crashed = false;
  double safety = 0.0;  // in [-1, 1]
  double task = 0.0;    // in [-1, 1]
  double total = 0.0;
};

ScoreBreakdown score_episode(const EpisodeOutcome& outcome, const ScoreWeights& weights,
                             const ScoreShape& shape = {});
double performance_score(const EpisodeOutcome& outcome, const ScoreWeights& weights,
                         const ScoreShape& shape = {});

enum class FmcEstimator { automatic, exact_1d, grid_2d, monte_carlo };

std::string to_string(FmcEstimator e);
FmcEstimator fmc_estimator_from_string(const std::string& s);

struct FmcConfig {
  double rho = 0.05;
  double lambda = -500.0;
  FmcEstimator estimator = FmcEstimator::automatic;  // exact in 1-D, Monte-Carlo otherwise
  std::size_t mc_points = 1000000;
  std::uint64_t mc_seed = 20240601;
  int grid_resolution = 1000;

  void validate() const;
};

// A case in normalized coordinates with its score.
struct ScoredPoint {
  std::vector<double> coords;
  double score = 0.0;
};

struct FmcResult {
  double coverage = 0.0;
  std::size_t failing = 0;
  int dim = 0;
  FmcEstimator estimator = FmcEstimator::automatic;
  std::uint64_t seed = 0;
  double std_error = 0.0;
  std::size_t mc_points = 0;
};

// Length of the union of [p - rho, p + rho] clipped to [0, 1].
double exact_union_1d(std::span<const double> points, double rho);

// Volume of the union of radius-rho Euclidean balls around the points with
// score < lambda, intersected with the unit hypercube. Throws
// std::invalid_argument when points differ in dimension.
FmcResult fmc(std::span<const ScoredPoint> points, const FmcConfig& cfg);

// Monte-Carlo estimate of the union volume for the given centres. Samples are
// split into fixed strata seeded from (seed, stratum) so the estimate does not
// depend on `jobs`.
FmcResult union_volume_monte_carlo(const std::vector<std::vector<double>>& centres, int dim,
                                   double rho, std::size_t points, std::uint64_t seed,
                                   int jobs = 1);

double union_volume_grid_2d(const std::vector<std::vector<double>>& centres, double rho,
                            int resolution);

}  // namespace mergetest
