#include "mergetest/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mergetest {

namespace {

double hinge_below(double value, double threshold) { return std::max(0.0, threshold - value); }
double hinge_above(double value, double threshold) { return std::max(0.0, value - threshold); }

double band_violation(double v, double lo, double hi) {
  return hinge_below(v, lo) + hinge_above(v, hi);
}

template <std::size_t N>
double dot(const std::array<double, N>& w, const std::array<double, N>& phi) {
  double r = 0.0;
  for (std::size_t i = 0; i < N; ++i) r += w[i] * phi[i];
  return r;
}

}  // namespace

void RewardParams::validate() const {
  if (!(dx_crash > 0.0 && dx_crash < dx_critical)) {
    throw std::invalid_argument("reward params: need 0 < dx_crash < dx_critical");
  }
  if (!(v_min > 0.0 && v_min < v_hw_min && v_hw_min < v_hw_max)) {
    throw std::invalid_argument("reward params: need 0 < v_min < v_hw_min < v_hw_max");
  }
  if (!(ttc_min > 0.0)) throw std::invalid_argument("reward params: ttc_min must be positive");
  if (!(dx_saturation > dx_critical)) {
    throw std::invalid_argument("reward params: dx_saturation must exceed dx_critical");
  }
}

std::array<double, 2> pov_ego_features(double v_pov, double a_pov, const RewardParams& p) {
  return {-std::abs(a_pov), -band_violation(v_pov, p.v_hw_min, p.v_hw_max)};
}

std::array<double, 2> pov_ego_features(const State& s, const Action& a_pov,
                                       const RewardParams& p) {
  return pov_ego_features(s.v_pov, a_pov.accel(), p);
}

std::array<double, 3> vut_ego_features(double v_vut, double a_vut, bool terminal,
                                       const RewardParams& p) {
  const double vend = terminal ? -band_violation(v_vut, p.v_hw_min, p.v_hw_max) : 0.0;
  return {-std::abs(a_vut), -hinge_below(v_vut, p.v_min), vend};
}

std::array<double, 3> safety_features(const SafetyFeatures& safety, const RewardParams& p) {
  const double gap = std::abs(safety.dx1);
  const double phi_ttc = std::isfinite(safety.ttc) ? -hinge_below(safety.ttc, p.ttc_min) : 0.0;
  const double phi_dx = std::min(gap, p.dx_saturation) - p.dx_critical;
  const double phi_crash = gap < p.dx_crash ? -1.0 : 0.0;
  return {phi_ttc, phi_dx, phi_crash};
}

RewardBreakdown compose_reward(Role role, double psi, const RewardInputs& in,
                               const RewardParams& p) {
  RewardBreakdown r;
  r.r_pov_ego = dot(p.w_pov_ego, in.pov_ego);
  r.r_vut_ego = dot(p.w_vut_ego, in.vut_ego);
  r.r_safe = dot(p.w_safe, in.safe);
  if (role == Role::vut) {
    r.r_total = r.r_safe + r.r_vut_ego;
    return r;
  }
  if (!(psi >= 0.0 && psi < std::numbers::pi / 2)) {
    throw std::domain_error("SVO angle must lie in [0, pi/2)");
  }
  r.r_total = r.r_safe + r.r_pov_ego * std::cos(psi) + r.r_vut_ego * std::sin(psi);
  return r;
}

RewardBreakdown transition_reward(Role role, double psi, const State& s, const Action& a_pov,
                                  const Action& a_vut, const State& next,
                                  const SafetyFeatures* terminal_safety,
                                  const RewardParams& p) {
  RewardInputs in;
  in.pov_ego = pov_ego_features(s, a_pov, p);
  in.vut_ego = vut_ego_features(s.v_vut, a_vut.accel(), false, p);
  if (terminal_safety != nullptr) {
    // Merging speed is judged on the terminal state.
    in.vut_ego[2] = vut_ego_features(next.v_vut, 0.0, true, p)[2];
    in.safe = safety_features(*terminal_safety, p);
  }
  return compose_reward(role, psi, in, p);
}

}  // namespace mergetest
