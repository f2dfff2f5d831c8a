#pragma once

// Reward features and SVO-weighted reward composition for RL training.
//
// Features are unweighted hinge penalties; weights live in RewardParams so a
// reward is always the dot product W^T Phi. Ego features are evaluated every
// step on the pre-step state and the chosen action. Safety features are
// evaluated once, on the terminal state.

#include <array>

#include "mergetest/sim.hpp"

namespace mergetest {

struct RewardParams {
  // Thresholds.
  double v_hw_max = 35.0;
  double v_hw_min = 24.6;
  double v_min = 12.0;
  double ttc_min = 7.0;
  double dx_crash = 6.0;
  double dx_critical = 15.0;
  double dx_saturation = 100.0;

  // POV ego weights: [acc, vHW].
  std::array<double, 2> w_pov_ego{0.02, 0.1};
  // VUT ego weights: [acc, vmin, vend].
  std::array<double, 3> w_vut_ego{0.02, 1.0, 1.0};
  // Safety weights: [TTC, dx, crash].
  std::array<double, 3> w_safe{2.0, 0.1, 1000.0};

  void validate() const;
};

enum class Role { pov, vut };

// [phi_acc, phi_vHW]
std::array<double, 2> pov_ego_features(const State& s, const Action& a_pov,
                                       const RewardParams& p);
std::array<double, 2> pov_ego_features(double v_pov, double a_pov, const RewardParams& p);

// [phi_acc, phi_vmin, phi_vend]; phi_vend is only non-zero when `terminal`
// and is then evaluated on the merging speed `v_vut`.
std::array<double, 3> vut_ego_features(double v_vut, double a_vut, bool terminal,
                                       const RewardParams& p);

// [phi_TTC, phi_dx, phi_crash]
std::array<double, 3> safety_features(const SafetyFeatures& safety, const RewardParams& p);

struct RewardBreakdown {
  double r_pov_ego = 0.0;
  double r_vut_ego = 0.0;
  double r_safe = 0.0;
  double r_total = 0.0;
};

// Inputs needed to reward one transition for either role.
struct RewardInputs {
  std::array<double, 2> pov_ego{};
  std::array<double, 3> vut_ego{};
  std::array<double, 3> safe{};  // zero on non-terminal steps
};

// r_VUT = r_safe + r_VUTe; r_POV = r_safe + r_POVe cos(psi) + r_VUTe sin(psi).
// Throws std::domain_error for a POV with psi outside [0, pi/2).
RewardBreakdown compose_reward(Role role, double psi, const RewardInputs& in,
                               const RewardParams& p);

// Features + composition for one simulator transition s -> next. Pass the
// terminal safety features on the final transition, nullptr otherwise.
RewardBreakdown transition_reward(Role role, double psi, const State& s, const Action& a_pov,
                                  const Action& a_vut, const State& next,
                                  const SafetyFeatures* terminal_safety,
                                  const RewardParams& p);

}  // namespace mergetest
