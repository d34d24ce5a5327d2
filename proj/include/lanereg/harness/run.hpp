#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lanereg/env.hpp"
#include "lanereg/metrics.hpp"
#include "lanereg/qlearner/dqn.hpp"
#include "lanereg/qlearner/train.hpp"

namespace lanereg::harness {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

/// Everything a command needs. The config hash covers what determines a trained policy
/// (scenario, env, rewards, training); seeds and paths are left out so a policy can be
/// evaluated on any seed list.
struct RunManifest {
  env::ScenarioConfig scenario{};
  env::EnvConfig env{};
  env::RewardWeights weights{};
  qlearner::TrainConfig train = desk_train_config();
  std::vector<std::uint64_t> seeds = default_seeds(30);
  std::filesystem::path checkpoint;
  std::filesystem::path out_dir = "runs";
  int jobs = 1;  // worker threads for episode-parallel evaluation

  nlohmann::json config_json() const;
  std::uint64_t config_hash() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  static qlearner::TrainConfig desk_train_config();
  static std::vector<std::uint64_t> default_seeds(int n);
};

/// Parses "1-30", "4,8,15" or a mix such as "1-3,10".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Result of one evaluation episode.
struct EpisodeOutcome {
  std::uint64_t seed = 0;
  std::optional<metrics::EpisodeMetrics> metrics;
  std::optional<std::string> fault;
  double mean_reward = 0.0;
  double mean_r1 = 0.0;
  double mean_r2 = 0.0;
};

/// Runs one full episode greedily under `policy`, or all-allow when it is null.
EpisodeOutcome run_episode(const RunManifest& m, std::uint64_t seed, const qlearner::Net* policy);
/// One episode per seed, in seed-list order, spread over m.jobs threads.
std::vector<EpisodeOutcome> evaluate(const RunManifest& m, const qlearner::Net* policy);

/// Paired per-episode improvements in percent, positive = better: speed increase, and
/// relative reductions of CO2, TTC exposure, TET and lane changes per vehicle. A metric
/// whose baseline value is 0 gives 0 when the policy also scores 0 and NaN otherwise.
struct Uplift {
  std::uint64_t seed = 0;
  double speed = 0.0;
  double co2 = 0.0;
  double ttc = 0.0;
  double tet = 0.0;
  double lane_changes = 0.0;
};

/// Throws std::invalid_argument when the two arms were not run on the same seeds.
std::vector<Uplift> paired_uplifts(const std::vector<EpisodeOutcome>& baseline,
                                   const std::vector<EpisodeOutcome>& policy);

/// Lanes' share of (grid, step) samples that keep at least one direction open.
std::vector<double> any_allowed_by_lane(const std::vector<EpisodeOutcome>& outcomes);

/// Loads and checks a checkpoint against the manifest; throws on hash mismatch.
qlearner::Net load_policy(const RunManifest& m);

/// CLI verbs. Each writes its artifacts under m.out_dir and returns a process exit code.
int cmd_train(const RunManifest& m, std::ostream& log);
int cmd_eval(const RunManifest& m, bool baseline, std::ostream& log);
int cmd_compare(const RunManifest& m, std::ostream& log);
int cmd_sweep_cvrate(const RunManifest& m, const std::vector<double>& rates, std::ostream& log);
int cmd_validate(const RunManifest& m, std::ostream& log);
int cmd_export(const RunManifest& m, std::uint64_t seed, bool baseline, std::ostream& log);

}  // namespace lanereg::harness
