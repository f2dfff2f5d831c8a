#pragma once

// Two-vehicle highway-merge simulator.
//
// Both vehicles move on lane-fixed 1-D axes whose origin is the merge point
// M. The POV drives on the main lane, the VUT on the ramp; positions are
// negative upstream of M. Each step both vehicles follow a discrete-time
// double integrator with speeds clamped at zero.

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

namespace mergetest {

struct RewardParams;

struct State {
  double x_pov = 0.0;
  double v_pov = 0.0;
  double x_vut = 0.0;
  double v_vut = 0.0;

  bool finite() const;
  bool operator==(const State&) const = default;
};

// Acceleration set U shared by every policy (m/s^2).
inline constexpr std::array<double, 7> kAccelerations{-4.0, -3.0, -2.0, -1.0,
                                                       0.0,  1.0,  2.0};
inline constexpr int kNumActions = static_cast<int>(kAccelerations.size());
inline constexpr int kCoastIndex = 4;

// One discrete acceleration choice. `speed_cap` lets a speed-tracking policy
// (the level-0 VUT) stop accelerating exactly at its target speed instead of
// overshooting by up to a*dt; it never limits deceleration.
struct Action {
  int index = kCoastIndex;
  double speed_cap = std::numeric_limits<double>::infinity();

  double accel() const { return kAccelerations.at(static_cast<std::size_t>(index)); }
  static Action coast() { return Action{}; }
  // Nearest member of U, clamping to [a_min, a_max]; ties go to the lower index.
  static Action nearest(double accel);
  static Action from_index(int index);

  bool operator==(const Action&) const = default;
};

struct ScenarioConfig {
  double dt = 0.1;
  double x_vut0 = -182.0;
  double v_vut0 = 18.0;
  double t_max = 60.0;
  double merge_point = 0.0;

  void validate() const;
  // Hard step limit, ceil(t_max / dt).
  int max_steps() const;
};

// The part of a test case that fixes the physical start of an episode.
struct InitialCondition {
  double x_pov0 = 0.0;
  double v_pov0 = 0.0;
};

struct TrajectoryStep {
  State state;
  Action pov;
  Action vut;
  double a_pov = 0.0;  // effective accelerations after the speed cap/clamp
  double a_vut = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  State terminal;

  int elapsed_steps() const { return static_cast<int>(steps.size()); }
};

struct SafetyFeatures {
  double dx1 = 0.0;
  double dv1 = 0.0;
  double ttc = std::numeric_limits<double>::infinity();
  bool crashed = false;
};

enum class Termination { merge, timeout };

struct EpisodeOutcome {
  Trajectory trajectory;
  SafetyFeatures safety;
  Termination terminated_by = Termination::merge;
};

using PolicyFn = std::function<Action(const State&)>;

State step_dynamics(const State& s, const Action& a_pov, const Action& a_vut,
                    const ScenarioConfig& cfg);

// Time-to-collision from a terminal gap and relative speed.
double time_to_collision(double dx1, double dv1);

SafetyFeatures compute_safety_features(const State& terminal, double dx_crash);
SafetyFeatures compute_safety_features(const Trajectory& traj,
                                       const RewardParams& params);

// Rolls both policies forward from `init` until the VUT reaches M or the
// episode times out. Policies are queried on the same pre-step state.
EpisodeOutcome run_episode(const PolicyFn& pov_policy, const PolicyFn& vut_policy,
                           const InitialCondition& init, const ScenarioConfig& cfg,
                           const RewardParams& params);

State initial_state(const InitialCondition& init, const ScenarioConfig& cfg);

// Columns t,x_pov,v_pov,a_pov,x_vut,v_vut,a_vut; the terminal row leaves the
// acceleration columns empty.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, double dt);

}  // namespace mergetest
