#include "lanereg/qlearner/train.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "lanereg/gridstate.hpp"

namespace lanereg::qlearner {

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (target_period <= 0) throw ConfigError("target_period must be positive");
  for (double e : {epsilon_start, epsilon_end}) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  }
  if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0)) {
    throw ConfigError("epsilon_decay_fraction must lie in [0, 1]");
  }
  if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) throw ConfigError("buffer_capacity below batch_size");
  if (checkpoint_interval <= 0) throw ConfigError("checkpoint_interval must be positive");
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("hidden layer sizes must be positive");
  }
}

double TrainConfig::epsilon_at(long long step) const {
  const double decay = epsilon_decay_fraction * static_cast<double>(total_steps);
  if (decay <= 0.0 || static_cast<double>(step) >= decay) return epsilon_end;
  const double f = static_cast<double>(step) / decay;
  return epsilon_start + f * (epsilon_end - epsilon_start);
}

DqnParams TrainConfig::dqn_params() const {
  DqnParams p;
  p.layers = {kObservationSize};
  p.layers.insert(p.layers.end(), hidden.begin(), hidden.end());
  p.layers.push_back(kJointActions);
  p.gamma = gamma;
  p.learning_rate = learning_rate;
  return p;
}

std::uint64_t episode_seed(std::uint64_t run_seed, int episode) {
  // splitmix64 finaliser over (seed, episode)
  std::uint64_t z = run_seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(episode) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TrainResult train(env::RegulationEnv& env, const TrainConfig& cfg, DoubleDqn& learner, const TrainHooks& hooks) {
  cfg.validate();
  if (learner.online().input_size() != kObservationSize || learner.online().output_size() != kJointActions) {
    throw ConfigError("learner shape does not match the regulation environment");
  }
  TrainResult result;
  ReplayBuffer buffer(cfg.buffer_capacity);
  WindowObservations map(env.grid());
  Rng explore_rng = make_stream(cfg.seed, 10);
  Rng replay_rng = make_stream(cfg.seed, 11);
  const int agents = env.agents();
  long long step = 0;
  long long next_checkpoint = cfg.checkpoint_interval;

  if (hooks.on_checkpoint) hooks.on_checkpoint(0, learner);

  for (int episode = 0; step < cfg.total_steps; ++episode) {
    EpisodeLog row;
    row.episode = episode;
    try {
      env.reset(episode_seed(cfg.seed, episode));
    } catch (const InvariantViolation& e) {
      row.faulted = true;
      row.fault = e.what();
      row.steps = step;
      row.epsilon = cfg.epsilon_at(step);
      row.loss = std::numeric_limits<double>::quiet_NaN();
      ++result.faulted_episodes;
      result.log.push_back(row);
      if (hooks.on_episode) hooks.on_episode(row);
      continue;
    }
    double reward_sum = 0.0, r1_sum = 0.0, r2_sum = 0.0, loss_sum = 0.0;
    long long samples = 0, losses = 0;
    std::size_t pushed = 0;
    ActionField field(env.grid(), GridAction{});

    while (!env.done() && step < cfg.total_steps) {
      const double eps = cfg.epsilon_at(step);
      const std::vector<int> acts = learner.select_actions(env.observations().data(), agents, eps, explore_rng);
      for (std::size_t c = 0; c < acts.size(); ++c) field.cells()[c] = GridAction::from_index(acts[c]);
      Transition t;
      t.state = env.features();
      const env::StepResult res = env.step(field);
      if (res.fault) {
        buffer.pop_recent(pushed);
        row.faulted = true;
        row.fault = *res.fault;
        ++result.faulted_episodes;
        break;
      }
      t.actions.assign(acts.begin(), acts.end());
      t.rewards = res.rewards;
      t.next_state = env.features();
      t.terminal = res.done;
      buffer.push(std::move(t));
      ++pushed;
      for (std::size_t c = 0; c < res.rewards.size(); ++c) {
        reward_sum += res.rewards[c];
        r1_sum += res.speed_rewards[c];
        r2_sum += res.density_rewards[c];
      }
      samples += static_cast<long long>(res.rewards.size());
      ++step;

      if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size)) {
        const AgentBatch batch = flatten(buffer.sample(static_cast<std::size_t>(cfg.batch_size), replay_rng), map);
        loss_sum += learner.train_step(batch);
        ++losses;
        learner.maybe_sync(learner.train_steps(), cfg.target_period);
      }
      if (step == next_checkpoint) {
        if (hooks.on_checkpoint) hooks.on_checkpoint(step, learner);
        next_checkpoint += cfg.checkpoint_interval;
      }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.steps = step;
    row.mean_reward = samples ? reward_sum / static_cast<double>(samples) : nan;
    row.mean_r1 = samples ? r1_sum / static_cast<double>(samples) : nan;
    row.mean_r2 = samples ? r2_sum / static_cast<double>(samples) : nan;
    row.epsilon = cfg.epsilon_at(step);
    row.loss = losses ? loss_sum / static_cast<double>(losses) : nan;
    result.log.push_back(row);
    if (hooks.on_episode) hooks.on_episode(row);
  }

  result.env_steps = step;
  result.train_steps = learner.train_steps();
  // Final checkpoint unless the interval already produced one at this step.
  if (hooks.on_checkpoint && step > 0 && step % cfg.checkpoint_interval != 0) hooks.on_checkpoint(step, learner);
  return result;
}

void write_train_log_csv(std::ostream& os, const std::vector<EpisodeLog>& log) {
  os << "episode,steps,mean_reward,mean_r1,mean_r2,epsilon,loss\n";
  os.precision(9);
  for (const auto& r : log) {
    os << r.episode << ',' << r.steps << ',' << r.mean_reward << ',' << r.mean_r1 << ',' << r.mean_r2 << ','
       << r.epsilon << ',' << r.loss << '\n';
  }
}

std::vector<EpisodeLog> read_train_log_csv(std::istream& is) {
  std::vector<EpisodeLog> out;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 7) throw std::runtime_error("malformed training log row: " + line);
    EpisodeLog r;
    r.episode = std::stoi(cells[0]);
    r.steps = std::stoll(cells[1]);
    auto num = [](const std::string& s) {
      return s == "nan" || s == "-nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
    };
    r.mean_reward = num(cells[2]);
    r.mean_r1 = num(cells[3]);
    r.mean_r2 = num(cells[4]);
    r.epsilon = num(cells[5]);
    r.loss = num(cells[6]);
    r.faulted = std::isnan(r.mean_reward);
    out.push_back(r);
  }
  return out;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"gamma", c.gamma},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"target_period", c.target_period},
       {"epsilon_start", c.epsilon_start},
       {"epsilon_end", c.epsilon_end},
       {"epsilon_decay_fraction", c.epsilon_decay_fraction},
       {"total_steps", c.total_steps},
       {"buffer_capacity", c.buffer_capacity},
       {"checkpoint_interval", c.checkpoint_interval},
       {"hidden", c.hidden},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.gamma = j.value("gamma", d.gamma);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.target_period = j.value("target_period", d.target_period);
  c.epsilon_start = j.value("epsilon_start", d.epsilon_start);
  c.epsilon_end = j.value("epsilon_end", d.epsilon_end);
  c.epsilon_decay_fraction = j.value("epsilon_decay_fraction", d.epsilon_decay_fraction);
  c.total_steps = j.value("total_steps", d.total_steps);
  c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  c.checkpoint_interval = j.value("checkpoint_interval", d.checkpoint_interval);
  c.hidden = j.value("hidden", d.hidden);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

}  // namespace lanereg::qlearner
