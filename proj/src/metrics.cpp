#include "mergetest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "mergetest/parallel.hpp"

namespace mergetest {

void ScoreWeights::validate() const {
  if (!(crash < 0.0)) throw std::invalid_argument("crash weight must be negative");
  if (!(safety >= 0.0 && task >= 0.0)) {
    throw std::invalid_argument("safety and task weights must be non-negative");
  }
}

bool ScoreWeights::separates(double lambda) const {
  const double spread = std::abs(safety) + std::abs(task);
  return crash + spread < lambda && -spread > lambda;
}

ScoreShape ScoreShape::from_rewards(const RewardParams& p) {
  ScoreShape s;
  s.ttc_min = p.ttc_min;
  s.gap_crash = p.dx_crash;
  s.gap_critical = p.dx_critical;
  s.gap_good = p.dx_saturation;
  s.speed_band_min = p.v_hw_min;
  s.speed_band_max = p.v_hw_max;
  return s;
}

namespace {

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

double gap_score(double gap, const ScoreShape& s) {
  if (gap <= s.gap_crash) return -1.0;
  if (gap < s.gap_critical) return -1.0 + (gap - s.gap_crash) / (s.gap_critical - s.gap_crash);
  if (gap < s.gap_good) return (gap - s.gap_critical) / (s.gap_good - s.gap_critical);
  return 1.0;
}

double ttc_score(double ttc, const ScoreShape& s) {
  if (!std::isfinite(ttc)) return 1.0;
  return clamp_unit((ttc - s.ttc_min) / s.ttc_min);
}

}  // namespace

ScoreBreakdown score_episode(const EpisodeOutcome& outcome, const ScoreWeights& weights,
                             const ScoreShape& shape) {
  ScoreBreakdown b;
  b.crashed = outcome.safety.crashed;
  b.safety = 0.5 * (ttc_score(outcome.safety.ttc, shape) +
                    gap_score(std::abs(outcome.safety.dx1), shape));

  if (outcome.terminated_by == Termination::timeout) {
    b.task = -1.0;
  } else {
    const double v = outcome.trajectory.terminal.v_vut;
    const double deviation =
        std::max(0.0, shape.speed_band_min - v) + std::max(0.0, v - shape.speed_band_max);
    const double speed = clamp_unit(1.0 - 2.0 * deviation / shape.speed_tolerance);
    double mean_abs_accel = 0.0;
    const auto& steps = outcome.trajectory.steps;
    for (const auto& st : steps) mean_abs_accel += std::abs(st.a_vut);
    if (!steps.empty()) mean_abs_accel /= static_cast<double>(steps.size());
    const double smooth = clamp_unit(
        1.0 - 2.0 * std::max(0.0, mean_abs_accel - shape.comfort_accel) /
                  (shape.harsh_accel - shape.comfort_accel));
    b.task = 0.5 * (speed + smooth);
  }
  b.total = weights.crash * (b.crashed ? 1.0 : 0.0) + weights.safety * b.safety +
            weights.task * b.task;
  return b;
}

double performance_score(const EpisodeOutcome& outcome, const ScoreWeights& weights,
                         const ScoreShape& shape) {
  return score_episode(outcome, weights, shape).total;
}

std::string to_string(FmcEstimator e) {
  switch (e) {
    case FmcEstimator::automatic: return "auto";
    case FmcEstimator::exact_1d: return "exact-1d";
    case FmcEstimator::grid_2d: return "grid-2d";
    case FmcEstimator::monte_carlo: return "monte-carlo";
  }
  return "auto";
}

FmcEstimator fmc_estimator_from_string(const std::string& s) {
  if (s == "auto") return FmcEstimator::automatic;
  if (s == "exact-1d") return FmcEstimator::exact_1d;
  if (s == "grid-2d") return FmcEstimator::grid_2d;
  if (s == "monte-carlo") return FmcEstimator::monte_carlo;
  throw std::invalid_argument("unknown FMC estimator '" + s + "'");
}

void FmcConfig::validate() const {
  if (!(rho >= 0.0)) throw std::invalid_argument("FMC radius must be non-negative");
  if (mc_points == 0) throw std::invalid_argument("FMC needs at least one Monte-Carlo point");
  if (grid_resolution <= 0) throw std::invalid_argument("FMC grid resolution must be positive");
}

double exact_union_1d(std::span<const double> points, double rho) {
  if (points.empty() || rho <= 0.0) return 0.0;
  std::vector<double> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  double lo = std::max(0.0, sorted.front() - rho);
  double hi = std::min(1.0, sorted.front() + rho);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double a = std::max(0.0, sorted[i] - rho);
    const double b = std::min(1.0, sorted[i] + rho);
    if (a > hi) {
      total += std::max(0.0, hi - lo);
      lo = a;
      hi = b;
    } else {
      hi = std::max(hi, b);
    }
  }
  total += std::max(0.0, hi - lo);
  return total;
}

namespace {

// Centres sorted by their first coordinate for windowed lookups.
class BallIndex {
 public:
  BallIndex(std::vector<std::vector<double>> centres, double rho)
      : centres_(std::move(centres)), rho_sq_(rho * rho), rho_(rho) {
    std::sort(centres_.begin(), centres_.end(),
              [](const auto& a, const auto& b) { return a[0] < b[0]; });
    firsts_.reserve(centres_.size());
    for (const auto& c : centres_) firsts_.push_back(c[0]);
  }

  bool covers(const double* x, std::size_t dim) const {
    auto it = std::lower_bound(firsts_.begin(), firsts_.end(), x[0] - rho_);
    for (auto i = static_cast<std::size_t>(it - firsts_.begin());
         i < centres_.size() && firsts_[i] <= x[0] + rho_; ++i) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim && d2 < rho_sq_; ++d) {
        const double diff = centres_[i][d] - x[d];
        d2 += diff * diff;
      }
      if (d2 < rho_sq_) return true;
    }
    return false;
  }

 private:
  std::vector<std::vector<double>> centres_;
  std::vector<double> firsts_;
  double rho_sq_;
  double rho_;
};

constexpr std::size_t kStrata = 16;

}  // namespace

FmcResult union_volume_monte_carlo(const std::vector<std::vector<double>>& centres, int dim,
                                   double rho, std::size_t points, std::uint64_t seed,
                                   int jobs) {
  FmcResult r;
  r.dim = dim;
  r.estimator = FmcEstimator::monte_carlo;
  r.seed = seed;
  r.mc_points = points;
  r.failing = centres.size();
  if (centres.empty() || rho <= 0.0 || points == 0) return r;

  const BallIndex index(centres, rho);
  const auto d = static_cast<std::size_t>(dim);
  std::vector<std::size_t> hits(kStrata, 0);
  parallel_for(kStrata, jobs, [&](std::size_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t count = points / kStrata + (k < points % kStrata ? 1 : 0);
    std::vector<double> x(d);
    std::size_t h = 0;
    for (std::size_t i = 0; i < count; ++i) {
      for (auto& v : x) v = unit(rng);
      if (index.covers(x.data(), d)) ++h;
    }
    hits[k] = h;
  });
  std::size_t total = 0;
  for (auto h : hits) total += h;
  const double p = static_cast<double>(total) / static_cast<double>(points);
  r.coverage = p;
  r.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(points));
  return r;
}

double union_volume_grid_2d(const std::vector<std::vector<double>>& centres, double rho,
                            int resolution) {
  if (centres.empty() || rho <= 0.0) return 0.0;
  const BallIndex index(centres, rho);
  const double h = 1.0 / resolution;
  std::size_t covered = 0;
  double x[2];
  for (int i = 0; i < resolution; ++i) {
    x[0] = (i + 0.5) * h;
    for (int j = 0; j < resolution; ++j) {
      x[1] = (j + 0.5) * h;
      if (index.covers(x, 2)) ++covered;
    }
  }
  return static_cast<double>(covered) * h * h;
}

FmcResult fmc(std::span<const ScoredPoint> points, const FmcConfig& cfg) {
  cfg.validate();
  FmcResult r;
  if (points.empty()) {
    r.estimator = cfg.estimator == FmcEstimator::automatic ? FmcEstimator::exact_1d : cfg.estimator;
    return r;
  }
  const std::size_t dim = points.front().coords.size();
  if (dim == 0) throw std::invalid_argument("FMC cases need at least one dimension");
  std::vector<std::vector<double>> failing;
  for (const auto& p : points) {
    if (p.coords.size() != dim) throw std::invalid_argument("FMC cases differ in dimension");
    if (p.score < cfg.lambda) failing.push_back(p.coords);
  }
  FmcEstimator est = cfg.estimator;
  if (est == FmcEstimator::automatic) {
    est = dim == 1 ? FmcEstimator::exact_1d : FmcEstimator::monte_carlo;
  }
  r.dim = static_cast<int>(dim);
  r.estimator = est;
  r.failing = failing.size();
  switch (est) {
    case FmcEstimator::exact_1d: {
      if (dim != 1) throw std::invalid_argument("exact-1d FMC needs one-dimensional cases");
      std::vector<double> xs;
      for (const auto& c : failing) xs.push_back(c[0]);
      r.coverage = exact_union_1d(xs, cfg.rho);
      break;
    }
    case FmcEstimator::grid_2d:
      if (dim != 2) throw std::invalid_argument("grid-2d FMC needs two-dimensional cases");
      r.coverage = union_volume_grid_2d(failing, cfg.rho, cfg.grid_resolution);
      break;
    case FmcEstimator::monte_carlo:
    case FmcEstimator::automatic: {
      FmcResult mc = union_volume_monte_carlo(failing, static_cast<int>(dim), cfg.rho,
                                              cfg.mc_points, cfg.mc_seed);
      mc.failing = failing.size();
      return mc;
    }
  }
  return r;
}

}  // namespace mergetest
