#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanereg/env.hpp"
#include "lanereg/qlearner/dqn.hpp"

namespace lanereg::qlearner {

struct TrainConfig {
  double gamma = 0.95;
  double learning_rate = 1e-4;
  int batch_size = 32;            // global transitions per gradient step
  long long target_period = 1000;  // train steps between hard target copies
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.4;  // share of total_steps over which epsilon is annealed
  long long total_steps = 250000;       // env steps
  std::size_t buffer_capacity = 20000;
  long long checkpoint_interval = 10000;
  std::vector<int> hidden{128, 128};
  std::uint64_t seed = 0;

  void validate() const;
  /// Linear per-env-step annealing, flat at epsilon_end afterwards.
  double epsilon_at(long long step) const;
  DqnParams dqn_params() const;
};

struct EpisodeLog {
  int episode = 0;
  long long steps = 0;  // env steps completed after this episode
  double mean_reward = 0.0;
  double mean_r1 = 0.0;
  double mean_r2 = 0.0;
  double epsilon = 0.0;
  double loss = 0.0;  // mean over the episode's gradient steps (NaN when none)
  bool faulted = false;
  std::string fault;
};

struct TrainHooks {
  /// Called at step 0, every checkpoint_interval env steps and at the end.
  std::function<void(long long step, const DoubleDqn& learner)> on_checkpoint;
  std::function<void(const EpisodeLog&)> on_episode;
};

struct TrainResult {
  std::vector<EpisodeLog> log;
  long long env_steps = 0;
  long long train_steps = 0;
  int faulted_episodes = 0;
};

/// Seed of the environment episode with the given index.
std::uint64_t episode_seed(std::uint64_t run_seed, int episode);

/// Double DQN with parameter sharing over all lane-grid agents of `env`. Runs whole episodes
/// until total_steps env steps are done (the last episode may be cut short). One gradient
/// step per env step once the buffer holds a batch. A faulted episode is dropped from the
/// buffer and logged; training goes on with the next one.
TrainResult train(env::RegulationEnv& env, const TrainConfig& cfg, DoubleDqn& learner, const TrainHooks& hooks = {});

/// CSV: episode,steps,mean_reward,mean_r1,mean_r2,epsilon,loss
void write_train_log_csv(std::ostream& os, const std::vector<EpisodeLog>& log);
std::vector<EpisodeLog> read_train_log_csv(std::istream& is);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace lanereg::qlearner
