#include "mergetest/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>

#include "mergetest/errors.hpp"
#include "mergetest/hash.hpp"

namespace mergetest {

Action level0_pov_action(const State&) { return Action::coast(); }

Action level0_vut_action(const State& s, const Level0VutProfile& profile) {
  if (s.v_vut < profile.cruise_speed) {
    Action a = Action::nearest(profile.accel);
    a.speed_cap = profile.cruise_speed;
    return a;
  }
  return Action::coast();
}

double predict_gap_at_merge(const State& s, const Level0VutProfile& profile) {
  const double distance = std::max(0.0, -s.x_vut);
  if (distance == 0.0) return s.x_pov;

  const double v = s.v_vut;
  double t_arrive = 0.0;
  if (v < profile.cruise_speed && profile.accel > 0.0) {
    const double t_ramp = (profile.cruise_speed - v) / profile.accel;
    const double d_ramp = v * t_ramp + 0.5 * profile.accel * t_ramp * t_ramp;
    if (d_ramp >= distance) {
      t_arrive = (-v + std::sqrt(v * v + 2.0 * profile.accel * distance)) / profile.accel;
    } else {
      t_arrive = t_ramp + (distance - d_ramp) / profile.cruise_speed;
    }
  } else if (v > 0.0) {
    t_arrive = distance / v;
  } else {
    return std::numeric_limits<double>::infinity();
  }
  return s.x_pov + s.v_pov * t_arrive;
}

int greedy_index(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

QPolicy::QPolicy(Role role, int level, Mlp network, InputNormalization norm)
    : role_(role), level_(level), network_(std::move(network)), norm_(norm) {
  if (level < 1) throw std::invalid_argument("Q-network policies start at level 1");
  if (network_.input_dim() != input_dim_for(role, level)) {
    throw std::invalid_argument("network input dimension does not match role/level");
  }
  if (network_.output_dim() != kNumActions) {
    throw std::invalid_argument("network must output one value per action");
  }
}

Eigen::VectorXd QPolicy::encode(const State& s, std::optional<double> psi) const {
  if (psi.has_value() != takes_psi()) {
    throw InterfaceError(takes_psi() ? "level-2 POV policy requires an SVO angle"
                                     : "policy does not take an SVO angle");
  }
  Eigen::VectorXd x(takes_psi() ? 5 : 4);
  x(0) = s.x_pov / norm_.position;
  x(1) = s.v_pov / norm_.speed;
  x(2) = s.x_vut / norm_.position;
  x(3) = s.v_vut / norm_.speed;
  if (psi) x(4) = *psi / norm_.psi;
  return x;
}

std::array<double, kNumActions> QPolicy::q_values(const State& s,
                                                  std::optional<double> psi) const {
  const Eigen::VectorXd q = network_.forward(encode(s, psi));
  std::array<double, kNumActions> out{};
  for (int i = 0; i < kNumActions; ++i) out[static_cast<std::size_t>(i)] = q(i);
  return out;
}

Action q_policy_action(const QPolicy& policy, const State& s, std::optional<double> psi) {
  const auto q = policy.q_values(s, psi);
  return Action::from_index(greedy_index(q));
}

void RuleBasedVutConfig::validate(double x_vut0) const {
  if (!(x_rb2 > 0.0 && x_rb2 < x_rb1 && x_rb1 <= std::abs(x_vut0))) {
    throw std::invalid_argument("rule-based VUT needs 0 < x_rb2 < x_rb1 <= |x_vut0|");
  }
  if (!(dx_safe > 0.0)) throw std::invalid_argument("rule-based VUT dx_safe must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("rule-based VUT dt must be positive");
}

RuleBasedVutConfig RuleBasedVutConfig::design1() {
  RuleBasedVutConfig cfg;
  cfg.x_rb1 = 120.0;
  cfg.x_rb2 = 10.0;
  return cfg;
}

RuleBasedVutConfig RuleBasedVutConfig::design2() {
  RuleBasedVutConfig cfg;
  cfg.x_rb1 = 160.0;
  cfg.x_rb2 = 20.0;
  cfg.dx_safe = 10.0;
  return cfg;
}

Action rule_based_vut_action(const RuleBasedVutConfig& cfg, const State& s,
                             RuleBasedVutMemory& memory) {
  const double distance = -s.x_vut;
  if (memory.stage == 1 && distance <= cfg.x_rb1) memory.stage = 2;
  if (memory.stage == 2 && distance <= cfg.x_rb2) memory.stage = 3;

  const Action nominal = level0_vut_action(s, cfg.reference);
  if (memory.stage == 1) return nominal;

  const double gap = predict_gap_at_merge(s, cfg.reference);
  const bool too_close = std::abs(gap) < cfg.dx_safe;
  if (!too_close) {
    memory.pid_active = false;
    return nominal;
  }
  if (memory.stage == 2) return Action::coast();

  // Stage 3: track a gap of `gap_setpoint` on whichever side the POV is
  // predicted to be. Slowing down pushes the predicted gap upward.
  const double target = gap >= 0.0 ? cfg.gap_setpoint : -cfg.gap_setpoint;
  const double error = target - gap;
  if (!memory.pid_active) {
    memory.pid_active = true;
    memory.integral = 0.0;
    memory.previous_error = error;
  }
  memory.integral += error * cfg.dt;
  const double derivative = (error - memory.previous_error) / cfg.dt;
  memory.previous_error = error;
  const double u = -(cfg.kp * error + cfg.ki * memory.integral + cfg.kd * derivative);
  return Action::nearest(std::clamp(u, kAccelerations.front(), kAccelerations.back()));
}

std::string to_string(Role role) { return role == Role::pov ? "pov" : "vut"; }

Role role_from_string(const std::string& s) {
  if (s == "pov") return Role::pov;
  if (s == "vut") return Role::vut;
  throw FormatError("unknown role '" + s + "'");
}

namespace {

nlohmann::json policy_body(const StoredPolicy& policy) {
  nlohmann::json j;
  j["format"] = "mergetest-policy";
  j["version"] = kPolicyFormatVersion;
  j["role"] = to_string(policy.role);
  j["level"] = policy.level;
  j["kind"] = policy.network ? "q_network" : "level0";
  j["metadata"] = policy.metadata;
  if (policy.network) {
    const QPolicy& q = *policy.network;
    j["activation"] = "tanh";
    j["layer_sizes"] = q.network().layer_sizes();
    j["normalization"] = {{"position", q.normalization().position},
                          {"speed", q.normalization().speed},
                          {"psi", q.normalization().psi}};
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : q.network().layers()) {
      std::vector<double> w;
      w.reserve(static_cast<std::size_t>(layer.weight.size()));
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) w.push_back(layer.weight(r, c));
      }
      std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
      layers.push_back({{"weight", std::move(w)}, {"bias", std::move(b)}});
    }
    j["layers"] = std::move(layers);
  }
  return j;
}

}  // namespace

nlohmann::json policy_to_json(const StoredPolicy& policy) {
  nlohmann::json j = policy_body(policy);
  j["checksum"] = fnv1a64_hex(j.dump());
  return j;
}

StoredPolicy policy_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "mergetest-policy") {
      throw FormatError("not a mergetest policy file");
    }
    if (j.at("version").get<int>() != kPolicyFormatVersion) {
      throw FormatError("unsupported policy format version");
    }
    nlohmann::json body = j;
    const std::string stored = body.at("checksum").get<std::string>();
    body.erase("checksum");
    if (fnv1a64_hex(body.dump()) != stored) {
      throw ChecksumError("policy checksum mismatch (file corrupted or edited)");
    }

    StoredPolicy p;
    p.role = role_from_string(j.at("role").get<std::string>());
    p.level = j.at("level").get<int>();
    p.metadata = j.value("metadata", nlohmann::json::object());
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "level0") return p;
    if (kind != "q_network") throw FormatError("unknown policy kind '" + kind + "'");

    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto& layers_json = j.at("layers");
    if (sizes.size() != layers_json.size() + 1) throw FormatError("layer count mismatch");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < layers_json.size(); ++l) {
      const auto w = layers_json[l].at("weight").get<std::vector<double>>();
      const auto b = layers_json[l].at("bias").get<std::vector<double>>();
      const int in = sizes[l];
      const int out = sizes[l + 1];
      if (w.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out) ||
          b.size() != static_cast<std::size_t>(out)) {
        throw FormatError("layer " + std::to_string(l) + " has wrong parameter count");
      }
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) {
          layer.weight(r, c) = w[static_cast<std::size_t>(r) * static_cast<std::size_t>(in) +
                                 static_cast<std::size_t>(c)];
        }
        layer.bias(r) = b[static_cast<std::size_t>(r)];
      }
      layers.push_back(std::move(layer));
    }
    InputNormalization norm;
    const auto& n = j.at("normalization");
    norm.position = n.at("position").get<double>();
    norm.speed = n.at("speed").get<double>();
    norm.psi = n.at("psi").get<double>();
    p.network = QPolicy(p.role, p.level, Mlp(std::move(layers)), norm);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed policy file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("malformed policy file: ") + e.what());
  }
}

void save_policy(const std::filesystem::path& path, const StoredPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy file " + path.string());
  out << policy_to_json(policy).dump(1) << '\n';
}

StoredPolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read policy file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError("policy file " + path.string() + " is not valid JSON: " + e.what());
  }
  return policy_from_json(j);
}

PolicyFn bind_policy(const StoredPolicy& policy, std::optional<double> psi) {
  if (!policy.network) {
    if (policy.role == Role::pov) return [](const State& s) { return level0_pov_action(s); };
    return [](const State& s) { return level0_vut_action(s); };
  }
  const QPolicy* q = &*policy.network;
  if (!q->takes_psi()) psi.reset();
  return [q, psi](const State& s) { return q_policy_action(*q, s, psi); };
}

}  // namespace mergetest
