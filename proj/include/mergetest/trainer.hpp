#pragma once

// Double-DQN training of level-k agents and construction of the POV library.
//
// A level-k agent is trained against the frozen level-(k-1) policy of the
// opposite role. The library follows the alternating POV/VUT sequence:
// level-0 agents are analytic, level-1 POV and VUT are trained against the
// level-0 opponents, and the level-2 POV (conditioned on its SVO angle) is
// trained against the level-1 VUT.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mergetest/agents.hpp"
#include "mergetest/rewards.hpp"
#include "mergetest/sim.hpp"

namespace mergetest {

// Ranges for the sampled part of an initial condition. Shared with the test
// pool so trained agents cover every case a campaign can draw.
struct PoolRanges {
  double x_pov_min = -400.0;
  double x_pov_max = -150.0;
  double v_pov_min = 20.0;
  double v_pov_max = 35.0;
  double psi_min = 0.0;
  double psi_max = 1.5707963267948966;  // exclusive

  void validate() const;
};

struct TrainerConfig {
  double gamma = 0.95;
  std::size_t replay_capacity = 50000;
  std::size_t minibatch = 64;
  int target_sync_steps = 500;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_steps = 100000;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double grad_clip = 10.0;
  double huber_delta = 1.0;
  // Rewards are multiplied by this before entering the Q-targets; greedy
  // actions are unaffected by a positive scale.
  double reward_scale = 0.01;
  int episodes = 1500;
  int warmup_steps = 1000;
  int train_every = 1;
  std::vector<int> hidden{64, 64};
  std::uint64_t seed = 1;

  PoolRanges pool;
  ScenarioConfig scenario;
  RewardParams rewards;

  void validate() const;
};

struct Transition {
  Eigen::VectorXd input;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_input;
  bool terminal = false;
};

// Fixed-capacity FIFO experience store.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  // Uniform sample with replacement.
  std::vector<const Transition*> sample(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

// y = r for terminal transitions, otherwise
// y = r + gamma * Q_target(s', argmax_a Q_online(s', a)).
double ddqn_target(const Transition& t, const Mlp& online, const Mlp& target, double gamma);

struct TrainingLogEntry {
  int episode = 0;
  double episode_return = 0.0;
  double loss = 0.0;  // mean minibatch loss over the episode (0 before warmup)
  double epsilon = 0.0;
};

struct TrainingResult {
  QPolicy policy;
  std::vector<TrainingLogEntry> log;
  // Parameter snapshots taken at each target sync (only when requested).
  std::vector<Mlp> sync_snapshots;
};

struct TrainingHooks {
  bool record_sync_snapshots = false;
  // Called after every target-network sync with (online, target).
  std::function<void(const Mlp&, const Mlp&)> on_sync;
};

// Trains a level-k agent of `role` against a frozen opponent policy.
// Throws TrainingDivergence on a non-finite loss.
TrainingResult train_level_k_agent(Role role, int level, const PolicyFn& opponent,
                                   const TrainerConfig& cfg, const TrainingHooks& hooks = {});

// Undiscounted return of `role` over a finished episode.
double episode_return(const EpisodeOutcome& outcome, Role role, double psi,
                      const RewardParams& params);

// `provenance`, when non-empty, is written as a leading "# ..." line.
void write_training_log_csv(const std::filesystem::path& path,
                            const std::vector<TrainingLogEntry>& log,
                            const std::string& provenance = "");

// One trainer configuration per trained stage of the library.
struct LibraryConfig {
  TrainerConfig pov1;
  TrainerConfig vut1;
  TrainerConfig pov2;

  static LibraryConfig defaults();
};

struct PovLibrary {
  StoredPolicy pov0;
  StoredPolicy vut0;
  StoredPolicy pov1;
  StoredPolicy vut1;  // training stepping stone, not a test challenger
  StoredPolicy pov2;

  const StoredPolicy& pov(int level) const;
};

struct LibraryBuildReport {
  std::filesystem::path manifest;
  std::vector<std::string> trained;  // stage names retrained this run
  std::vector<std::string> reused;
};

// Trains (or reuses cached) stages into `dir` and writes `manifest.json`.
// A cached stage is reused when its file exists and its recorded stage hash
// matches; a corrupted cached file raises ChecksumError. Stage failures are
// rethrown with the stage name prepended.
LibraryBuildReport build_pov_library(const LibraryConfig& cfg, const std::filesystem::path& dir,
                                     std::ostream* progress = nullptr);

PovLibrary load_pov_library(const std::filesystem::path& manifest);

}  // namespace mergetest
