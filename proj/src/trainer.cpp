#include "mergetest/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mergetest/config.hpp"
#include "mergetest/errors.hpp"
#include "mergetest/hash.hpp"

namespace mergetest {

void PoolRanges::validate() const {
  if (!(x_pov_min < x_pov_max) || !(v_pov_min < v_pov_max) || !(v_pov_min >= 0.0)) {
    throw std::invalid_argument("pool ranges must be non-empty with non-negative speeds");
  }
  if (!(psi_min >= 0.0 && psi_min < psi_max && psi_max <= 1.5707963267948966)) {
    throw std::invalid_argument("pool psi range must lie within [0, pi/2)");
  }
}

void TrainerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0,1)");
  if (minibatch == 0 || replay_capacity < minibatch) {
    throw std::invalid_argument("replay capacity must be at least the minibatch size");
  }
  if (target_sync_steps <= 0 || train_every <= 0 || episodes < 0 || warmup_steps < 0) {
    throw std::invalid_argument("trainer step counts must be positive");
  }
  if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(grad_clip > 0.0)) {
    throw std::invalid_argument("invalid optimizer settings");
  }
  if (!(reward_scale > 0.0)) throw std::invalid_argument("reward_scale must be positive");
  pool.validate();
  scenario.validate();
  rewards.validate();
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t count,
                                                    std::mt19937_64& rng) const {
  if (items_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Transition*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&items_[pick(rng)]);
  return out;
}

double ddqn_target(const Transition& t, const Mlp& online, const Mlp& target, double gamma) {
  if (t.terminal) return t.reward;
  const Eigen::VectorXd q_online = online.forward(t.next_input);
  const int best =
      greedy_index(std::span<const double>(q_online.data(), static_cast<std::size_t>(q_online.size())));
  const Eigen::VectorXd q_target = target.forward(t.next_input);
  return t.reward + gamma * q_target(best);
}

namespace {

Eigen::VectorXd encode_input(const State& s, double psi, bool takes_psi,
                             const InputNormalization& norm) {
  Eigen::VectorXd x(takes_psi ? 5 : 4);
  x(0) = s.x_pov / norm.position;
  x(1) = s.v_pov / norm.speed;
  x(2) = s.x_vut / norm.position;
  x(3) = s.v_vut / norm.speed;
  if (takes_psi) x(4) = psi / norm.psi;
  return x;
}

double huber(double d, double delta) {
  const double a = std::abs(d);
  return a <= delta ? 0.5 * d * d : delta * (a - 0.5 * delta);
}

class MomentumSgd {
 public:
  MomentumSgd(const Mlp& net, const TrainerConfig& cfg) : cfg_(cfg) {
    for (const auto& layer : net.layers()) {
      velocity_.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                           Eigen::VectorXd::Zero(layer.bias.size())});
    }
  }

  void apply(Mlp& net, std::vector<DenseLayer>& grads) {
    double norm_sq = 0.0;
    for (const auto& g : grads) norm_sq += g.weight.squaredNorm() + g.bias.squaredNorm();
    const double norm = std::sqrt(norm_sq);
    const double scale = norm > cfg_.grad_clip ? cfg_.grad_clip / norm : 1.0;
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      velocity_[l].weight = cfg_.momentum * velocity_[l].weight -
                            (cfg_.learning_rate * scale) * grads[l].weight;
      velocity_[l].bias =
          cfg_.momentum * velocity_[l].bias - (cfg_.learning_rate * scale) * grads[l].bias;
      layers[l].weight += velocity_[l].weight;
      layers[l].bias += velocity_[l].bias;
    }
  }

 private:
  const TrainerConfig& cfg_;
  std::vector<DenseLayer> velocity_;
};

// One minibatch update; returns the mean Huber loss.
double train_minibatch(Mlp& online, const Mlp& target, MomentumSgd& opt,
                       const std::vector<const Transition*>& batch, const TrainerConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index in_dim = batch.front()->input.size();
  Eigen::MatrixXd x(in_dim, n);
  Eigen::MatrixXd x_next(in_dim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    x.col(j) = batch[static_cast<std::size_t>(j)]->input;
    x_next.col(j) = batch[static_cast<std::size_t>(j)]->next_input;
  }
  const Eigen::MatrixXd q_next_online = online.forward(x_next, nullptr);
  const Eigen::MatrixXd q_next_target = target.forward(x_next, nullptr);

  Mlp::Cache cache;
  const Eigen::MatrixXd q = online.forward(x, &cache);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(q.rows(), n);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = *batch[static_cast<std::size_t>(j)];
    double y = t.reward;
    if (!t.terminal) {
      Eigen::Index best = 0;
      q_next_online.col(j).maxCoeff(&best);
      y += cfg.gamma * q_next_target(best, j);
    }
    const double d = q(t.action, j) - y;
    loss += huber(d, cfg.huber_delta);
    d_out(t.action, j) = std::clamp(d, -cfg.huber_delta, cfg.huber_delta) / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) return loss;
  auto grads = online.backward(cache, d_out);
  opt.apply(online, grads);
  return loss;
}

}  // namespace

TrainingResult train_level_k_agent(Role role, int level, const PolicyFn& opponent,
                                   const TrainerConfig& cfg, const TrainingHooks& hooks) {
  cfg.validate();
  if (level < 1 || level > 2) throw std::invalid_argument("trainable levels are 1 and 2");

  std::mt19937_64 rng(cfg.seed);
  const int in_dim = QPolicy::input_dim_for(role, level);
  const bool takes_psi = in_dim == 5;
  std::vector<int> sizes{in_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(kNumActions);

  Mlp online(sizes, rng);
  Mlp target = online;
  MomentumSgd opt(online, cfg);
  ReplayBuffer buffer(cfg.replay_capacity);
  const InputNormalization norm;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, kNumActions - 1);

  TrainingResult result;
  const int max_steps = cfg.scenario.max_steps();
  long long total_steps = 0;

  for (int episode = 0; episode < cfg.episodes; ++episode) {
    InitialCondition init;
    init.x_pov0 = cfg.pool.x_pov_min + unit(rng) * (cfg.pool.x_pov_max - cfg.pool.x_pov_min);
    init.v_pov0 = cfg.pool.v_pov_min + unit(rng) * (cfg.pool.v_pov_max - cfg.pool.v_pov_min);
    const double psi =
        takes_psi ? cfg.pool.psi_min + unit(rng) * (cfg.pool.psi_max - cfg.pool.psi_min) : 0.0;

    State s = initial_state(init, cfg.scenario);
    double episode_return_sum = 0.0;
    double loss_sum = 0.0;
    int loss_count = 0;
    double epsilon = cfg.epsilon_start;

    for (int t = 0; t < max_steps && s.x_vut < cfg.scenario.merge_point; ++t) {
      const double frac =
          std::min(1.0, static_cast<double>(total_steps) / std::max(1, cfg.epsilon_decay_steps));
      epsilon = cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);

      Eigen::VectorXd input = encode_input(s, psi, takes_psi, norm);
      int chosen = 0;
      if (unit(rng) < epsilon) {
        chosen = random_action(rng);
      } else {
        const Eigen::VectorXd q = online.forward(input);
        chosen = greedy_index(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())));
      }
      const Action agent_action = Action::from_index(chosen);
      const Action other = opponent(s);
      const Action& a_pov = role == Role::pov ? agent_action : other;
      const Action& a_vut = role == Role::vut ? agent_action : other;

      const State next = step_dynamics(s, a_pov, a_vut, cfg.scenario);
      if (!next.finite()) throw SimulationFault("non-finite state during training");
      const bool terminal = next.x_vut >= cfg.scenario.merge_point;
      SafetyFeatures safety;
      if (terminal) safety = compute_safety_features(next, cfg.rewards.dx_crash);
      const double reward = transition_reward(role, psi, s, a_pov, a_vut, next,
                                              terminal ? &safety : nullptr, cfg.rewards)
                                .r_total;
      episode_return_sum += reward;
      buffer.push({std::move(input), chosen, reward * cfg.reward_scale,
                   encode_input(next, psi, takes_psi, norm), terminal});
      ++total_steps;

      if (buffer.size() >= std::max<std::size_t>(cfg.minibatch, static_cast<std::size_t>(cfg.warmup_steps)) &&
          total_steps % cfg.train_every == 0) {
        const double loss =
            train_minibatch(online, target, opt, buffer.sample(cfg.minibatch, rng), cfg);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "non-finite loss at episode " << episode << ", step " << total_steps
              << " (learning_rate " << cfg.learning_rate << ")";
          throw TrainingDivergence(msg.str());
        }
        loss_sum += loss;
        ++loss_count;
      }
      if (total_steps % cfg.target_sync_steps == 0) {
        target = online;
        if (hooks.record_sync_snapshots) result.sync_snapshots.push_back(online);
        if (hooks.on_sync) hooks.on_sync(online, target);
      }
      s = next;
    }
    result.log.push_back({episode, episode_return_sum,
                          loss_count > 0 ? loss_sum / loss_count : 0.0, epsilon});
  }

  result.policy = QPolicy(role, level, std::move(online), norm);
  return result;
}

double episode_return(const EpisodeOutcome& outcome, Role role, double psi,
                      const RewardParams& params) {
  const auto& steps = outcome.trajectory.steps;
  double total = 0.0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const bool last = k + 1 == steps.size();
    const State& next = last ? outcome.trajectory.terminal : steps[k + 1].state;
    const bool terminal = last && outcome.terminated_by == Termination::merge;
    total += transition_reward(role, psi, steps[k].state, steps[k].pov, steps[k].vut, next,
                               terminal ? &outcome.safety : nullptr, params)
                 .r_total;
  }
  return total;
}

void write_training_log_csv(const std::filesystem::path& path,
                            const std::vector<TrainingLogEntry>& log,
                            const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write training log " + path.string());
  if (!provenance.empty()) out << "# " << provenance << '\n';
  out.precision(10);
  out << "episode,return,loss,epsilon\n";
  for (const auto& e : log) {
    out << e.episode << ',' << e.episode_return << ',' << e.loss << ',' << e.epsilon << '\n';
  }
}

LibraryConfig LibraryConfig::defaults() {
  LibraryConfig cfg;
  cfg.pov1.seed = 11;
  cfg.vut1.seed = 12;
  cfg.pov2.seed = 13;
  return cfg;
}

const StoredPolicy& PovLibrary::pov(int level) const {
  switch (level) {
    case 0: return pov0;
    case 1: return pov1;
    case 2: return pov2;
    default: throw std::out_of_range("POV level must be 0, 1 or 2");
  }
}

namespace {

struct StageSpec {
  const char* name;
  const char* file;
  Role role;
  int level;
};

constexpr StageSpec kPov1{"pov_level1", "pov_level1.json", Role::pov, 1};
constexpr StageSpec kVut1{"vut_level1", "vut_level1.json", Role::vut, 1};
constexpr StageSpec kPov2{"pov_level2", "pov_level2.json", Role::pov, 2};

std::string stage_hash(const StageSpec& stage, const TrainerConfig& cfg,
                       const std::string& opponent_hash) {
  std::ostringstream key;
  key << stage.name << '|' << to_json(cfg).dump() << '|' << opponent_hash;
  return fnv1a64_hex(key.str());
}

StoredPolicy train_or_reuse(const StageSpec& stage, const TrainerConfig& cfg,
                            const StoredPolicy& opponent, const std::string& opponent_hash,
                            const std::filesystem::path& dir, LibraryBuildReport& report,
                            std::ostream* progress) {
  const std::string hash = stage_hash(stage, cfg, opponent_hash);
  const auto path = dir / stage.file;
  try {
    if (std::filesystem::exists(path)) {
      StoredPolicy cached = load_policy(path);
      if (cached.metadata.value("stage_hash", std::string()) == hash) {
        report.reused.emplace_back(stage.name);
        if (progress) *progress << "[train] " << stage.name << ": cached\n";
        return cached;
      }
    }
    if (progress) *progress << "[train] " << stage.name << ": training " << cfg.episodes
                            << " episodes (seed " << cfg.seed << ")\n";
    const PolicyFn opp = bind_policy(opponent);
    TrainingResult trained = train_level_k_agent(stage.role, stage.level, opp, cfg);
    StoredPolicy stored;
    stored.role = stage.role;
    stored.level = stage.level;
    stored.network = std::move(trained.policy);
    stored.metadata = {{"stage", stage.name},
                       {"stage_hash", hash},
                       {"seed", cfg.seed},
                       {"episodes", cfg.episodes},
                       {"opponent_hash", opponent_hash}};
    save_policy(path, stored);
    write_training_log_csv(dir / (std::string("train_") + stage.name + ".csv"), trained.log,
                           "stage_hash=" + hash + " seed=" + std::to_string(cfg.seed));
    report.trained.emplace_back(stage.name);
    return stored;
  } catch (const ChecksumError& e) {
    throw ChecksumError(std::string(stage.name) + ": " + e.what());
  } catch (const TrainingDivergence& e) {
    throw TrainingDivergence(std::string(stage.name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(stage.name) + ": " + e.what());
  }
}

}  // namespace

LibraryBuildReport build_pov_library(const LibraryConfig& cfg, const std::filesystem::path& dir,
                                     std::ostream* progress) {
  std::filesystem::create_directories(dir);
  LibraryBuildReport report;

  StoredPolicy pov0;
  pov0.role = Role::pov;
  pov0.level = 0;
  pov0.metadata = {{"stage", "pov_level0"}};
  save_policy(dir / "pov_level0.json", pov0);
  StoredPolicy vut0;
  vut0.role = Role::vut;
  vut0.level = 0;

  const StoredPolicy pov1 = train_or_reuse(kPov1, cfg.pov1, vut0, "vut_level0", dir, report, progress);
  const StoredPolicy vut1 = train_or_reuse(kVut1, cfg.vut1, pov0, "pov_level0", dir, report, progress);
  const std::string vut1_hash = vut1.metadata.at("stage_hash").get<std::string>();
  const StoredPolicy pov2 = train_or_reuse(kPov2, cfg.pov2, vut1, vut1_hash, dir, report, progress);

  nlohmann::json manifest;
  manifest["format"] = "mergetest-library";
  manifest["version"] = 1;
  manifest["config_hash"] = fnv1a64_hex(to_json(cfg).dump());
  manifest["policies"] = {
      {"pov_level0", {{"path", "pov_level0.json"}}},
      {"pov_level1", {{"path", kPov1.file}, {"seed", cfg.pov1.seed}}},
      {"vut_level1", {{"path", kVut1.file}, {"seed", cfg.vut1.seed}}},
      {"pov_level2", {{"path", kPov2.file}, {"seed", cfg.pov2.seed}}},
  };
  report.manifest = dir / "manifest.json";
  std::ofstream out(report.manifest);
  if (!out) throw std::runtime_error("cannot write " + report.manifest.string());
  out << manifest.dump(2) << '\n';
  return report;
}

PovLibrary load_pov_library(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot read library manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed library manifest: " + std::string(e.what()));
  }
  const auto dir = manifest_path.parent_path();
  auto load = [&](const char* key) {
    try {
      return load_policy(dir / manifest.at("policies").at(key).at("path").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("library manifest lacks ") + key);
    }
  };
  PovLibrary lib;
  lib.pov0 = load("pov_level0");
  lib.pov1 = load("pov_level1");
  lib.vut1 = load("vut_level1");
  lib.pov2 = load("pov_level2");
  lib.vut0.role = Role::vut;
  lib.vut0.level = 0;
  return lib;
}

}  // namespace mergetest
