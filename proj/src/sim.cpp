#include "mergetest/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mergetest/errors.hpp"
#include "mergetest/rewards.hpp"

namespace mergetest {

bool State::finite() const {
  return std::isfinite(x_pov) && std::isfinite(v_pov) && std::isfinite(x_vut) &&
         std::isfinite(v_vut);
}

Action Action::nearest(double accel) {
  if (!std::isfinite(accel)) return coast();
  int best = 0;
  double best_dist = std::abs(kAccelerations[0] - accel);
  for (int i = 1; i < kNumActions; ++i) {
    const double d = std::abs(kAccelerations[static_cast<std::size_t>(i)] - accel);
    if (d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return from_index(best);
}

Action Action::from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    throw std::out_of_range("action index " + std::to_string(index) + " outside [0,6]");
  }
  Action a;
  a.index = index;
  return a;
}

void ScenarioConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  if (!(x_vut0 <= merge_point)) {
    throw std::invalid_argument("x_vut0 must not lie downstream of the merge point");
  }
  if (!(v_vut0 >= 0.0)) throw std::invalid_argument("v_vut0 must be non-negative");
  if (!(t_max >= dt)) throw std::invalid_argument("t_max must be at least one step");
}

int ScenarioConfig::max_steps() const {
  return static_cast<int>(std::ceil(t_max / dt - 1e-9));
}

namespace {

double next_speed(double v, const Action& a, double dt) {
  double next = v + a.accel() * dt;
  if (a.accel() > 0.0 && next > a.speed_cap) next = std::max(v, a.speed_cap);
  return std::max(0.0, next);
}

}  // namespace

State step_dynamics(const State& s, const Action& a_pov, const Action& a_vut,
                    const ScenarioConfig& cfg) {
  State next;
  next.x_pov = s.x_pov + s.v_pov * cfg.dt;
  next.v_pov = next_speed(s.v_pov, a_pov, cfg.dt);
  next.x_vut = s.x_vut + s.v_vut * cfg.dt;
  next.v_vut = next_speed(s.v_vut, a_vut, cfg.dt);
  return next;
}

double time_to_collision(double dx1, double dv1) {
  if (dx1 * dv1 < 0.0) return dx1 / (-dv1);
  return std::numeric_limits<double>::infinity();
}

SafetyFeatures compute_safety_features(const State& terminal, double dx_crash) {
  SafetyFeatures f;
  f.dx1 = terminal.x_pov - terminal.x_vut;
  f.dv1 = terminal.v_pov - terminal.v_vut;
  f.ttc = time_to_collision(f.dx1, f.dv1);
  f.crashed = std::abs(f.dx1) < dx_crash;
  return f;
}

SafetyFeatures compute_safety_features(const Trajectory& traj, const RewardParams& params) {
  return compute_safety_features(traj.terminal, params.dx_crash);
}

State initial_state(const InitialCondition& init, const ScenarioConfig& cfg) {
  return State{init.x_pov0, init.v_pov0, cfg.x_vut0, cfg.v_vut0};
}

EpisodeOutcome run_episode(const PolicyFn& pov_policy, const PolicyFn& vut_policy,
                           const InitialCondition& init, const ScenarioConfig& cfg,
                           const RewardParams& params) {
  const int max_steps = cfg.max_steps();
  EpisodeOutcome out;
  Trajectory& traj = out.trajectory;
  traj.steps.reserve(128);

  State s = initial_state(init, cfg);
  if (!s.finite()) throw SimulationFault("non-finite initial state");
  while (s.x_vut < cfg.merge_point && traj.elapsed_steps() < max_steps) {
    const Action a_pov = pov_policy(s);
    const Action a_vut = vut_policy(s);
    const State next = step_dynamics(s, a_pov, a_vut, cfg);
    if (!next.finite()) {
      std::ostringstream msg;
      msg << "non-finite state at step " << traj.elapsed_steps();
      throw SimulationFault(msg.str());
    }
    traj.steps.push_back({s, a_pov, a_vut, (next.v_pov - s.v_pov) / cfg.dt,
                          (next.v_vut - s.v_vut) / cfg.dt});
    s = next;
  }
  traj.terminal = s;
  out.terminated_by = s.x_vut >= cfg.merge_point ? Termination::merge : Termination::timeout;
  out.safety = compute_safety_features(traj, params);
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, double dt) {
  const auto old_precision = out.precision(10);
  out << "t,x_pov,v_pov,a_pov,x_vut,v_vut,a_vut\n";
  int k = 0;
  for (const auto& step : traj.steps) {
    const State& s = step.state;
    out << k * dt << ',' << s.x_pov << ',' << s.v_pov << ',' << step.a_pov << ',' << s.x_vut
        << ',' << s.v_vut << ',' << step.a_vut << '\n';
    ++k;
  }
  const State& s = traj.terminal;
  out << k * dt << ',' << s.x_pov << ',' << s.v_pov << ",," << s.x_vut << ',' << s.v_vut
      << ",\n";
  out.precision(old_precision);
}

}  // namespace mergetest
