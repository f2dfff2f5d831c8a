#pragma once

// Driving policies: the analytic level-0 agents, greedy Q-network agents for
// levels 1-2, and the three-stage rule-based VUT used as a test subject.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "mergetest/mlp.hpp"
#include "mergetest/rewards.hpp"
#include "mergetest/sim.hpp"

namespace mergetest {

// Speed profile of the level-0 VUT: constant acceleration up to a cruise speed.
struct Level0VutProfile {
  double accel = 1.0;
  double cruise_speed = 28.0;
};

Action level0_pov_action(const State& s);
Action level0_vut_action(const State& s, const Level0VutProfile& profile = {});

// Predicted POV position relative to M at the moment the VUT reaches M,
// assuming the POV holds its speed and the VUT follows `profile` from its
// current speed. Returns +inf when the VUT can never reach M.
double predict_gap_at_merge(const State& s, const Level0VutProfile& profile = {});

// Index of the largest value; ties resolve to the lowest index.
int greedy_index(std::span<const double> values);

// Divisors applied to the network inputs.
struct InputNormalization {
  double position = 400.0;
  double speed = 40.0;
  double psi = 1.5707963267948966;
};

class QPolicy {
 public:
  QPolicy() = default;
  QPolicy(Role role, int level, Mlp network, InputNormalization norm = {});

  Role role() const { return role_; }
  int level() const { return level_; }
  bool takes_psi() const { return network_.input_dim() == 5; }
  const Mlp& network() const { return network_; }
  Mlp& network() { return network_; }
  const InputNormalization& normalization() const { return norm_; }

  // Network input for a state; throws InterfaceError when psi is supplied to
  // a policy that does not take it or omitted for one that does.
  Eigen::VectorXd encode(const State& s, std::optional<double> psi) const;
  std::array<double, kNumActions> q_values(const State& s, std::optional<double> psi) const;

  static int input_dim_for(Role role, int level) {
    return role == Role::pov && level >= 2 ? 5 : 4;
  }

 private:
  Role role_ = Role::pov;
  int level_ = 1;
  Mlp network_;
  InputNormalization norm_;
};

Action q_policy_action(const QPolicy& policy, const State& s, std::optional<double> psi);

struct RuleBasedVutConfig {
  double x_rb1 = 120.0;  // stage-2 trigger distance to M
  double x_rb2 = 60.0;   // stage-3 trigger distance to M
  double dx_safe = 20.0;
  double kp = 0.15;
  double ki = 0.01;
  double kd = 0.3;
  double gap_setpoint = 25.0;
  double dt = 0.1;
  Level0VutProfile reference;

  void validate(double x_vut0) const;

  static RuleBasedVutConfig design1();
  static RuleBasedVutConfig design2();
};

// Per-episode controller memory.
struct RuleBasedVutMemory {
  int stage = 1;
  bool pid_active = false;
  double integral = 0.0;
  double previous_error = 0.0;
};

Action rule_based_vut_action(const RuleBasedVutConfig& cfg, const State& s,
                             RuleBasedVutMemory& memory);

class RuleBasedVut {
 public:
  explicit RuleBasedVut(RuleBasedVutConfig cfg) : cfg_(std::move(cfg)) {}
  Action act(const State& s) { return rule_based_vut_action(cfg_, s, memory_); }
  int stage() const { return memory_.stage; }

 private:
  RuleBasedVutConfig cfg_;
  RuleBasedVutMemory memory_;
};

// Either an analytic level-0 agent or a trained network, as persisted in the
// POV library.
struct StoredPolicy {
  Role role = Role::pov;
  int level = 0;
  std::optional<QPolicy> network;  // empty for level 0
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr int kPolicyFormatVersion = 1;

nlohmann::json policy_to_json(const StoredPolicy& policy);
// Throws ChecksumError when the stored checksum does not match the content
// and FormatError for structurally invalid files.
StoredPolicy policy_from_json(const nlohmann::json& j);

void save_policy(const std::filesystem::path& path, const StoredPolicy& policy);
StoredPolicy load_policy(const std::filesystem::path& path);

// Binds a stored policy (and the SVO angle for a level-2 POV) to the
// simulator's policy signature. The result refers to `policy`, which must
// outlive it. A psi passed to a policy that does not take one is ignored.
PolicyFn bind_policy(const StoredPolicy& policy, std::optional<double> psi = std::nullopt);

std::string to_string(Role role);
Role role_from_string(const std::string& s);

}  // namespace mergetest
