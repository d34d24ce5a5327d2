#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanereg/actions.hpp"
#include "lanereg/gridstate.hpp"
#include "lanereg/metrics.hpp"
#include "lanereg/roadsim/config.hpp"
#include "lanereg/roadsim/world.hpp"

namespace lanereg::env {

enum class ScenarioKind { stable_flow, lane_degrade, vehicle_stop };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario(const std::string& name);

/// Ranges safety-critical events are drawn from at every reset. Times are offsets from the
/// end of the warm-up.
struct EventRanges {
  std::array<double, 2> degrade_start{200.0, 600.0};   // m
  std::array<double, 2> degrade_length{100.0, 300.0};  // m
  std::array<double, 2> degrade_gap{4.0, 10.0};        // s
  std::array<double, 2> degrade_duration{300.0, 600.0};  // s
  std::array<double, 2> stop_start{300.0, 800.0};  // m, start of the designation window
  double stop_window = 100.0;                      // m
  std::array<double, 2> stop_hold{30.0, 120.0};    // s
  double stop_decel = 3.0;                         // m/s^2
  std::array<double, 2> trigger{100.0, 500.0};     // s after warm-up
  double stop_trigger_window = 200.0;              // s the stop may wait for a vehicle

  void validate() const;
};

/// Everything that defines a traffic situation apart from the seed.
struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::stable_flow;
  roadsim::DemandLevel demand = roadsim::DemandLevel::low;
  double cv_rate = 1.0;
  std::optional<double> inflow;  // veh/h/lane; replaces the demand preset's inflow when set
  roadsim::RoadConfig road{};
  roadsim::IdmParams idm{};
  roadsim::LaneChangeParams lane_change{};
  EventRanges events{};

  void validate() const;
};

struct RewardWeights {
  double speed_weight = 0.5;    // w1
  double density_weight = 0.5;  // w2
  double max_speed = 24.59;     // m/s
  double max_density = 0.133;   // veh/(lane m)

  void validate() const;
};

struct EnvConfig {
  double env_step = 4.0;     // s per agent decision
  double reward_step = 1.0;  // s between reward samples
  int episode_length = 400;  // env steps after the warm-up
  double warmup = 120.0;     // s of all-allow traffic before the first decision

  /// Checks divisibility of env_step by reward_step by the simulation step.
  void validate(double sim_step) const;
  int sim_steps_per_env_step(double sim_step) const;
  int reward_samples() const;
};

/// Lane grids within one lane and two grids of (lane, grid), clipped to the road.
std::vector<std::pair<int, int>> neighborhood(const GridSpec& spec, int lane, int grid);

struct RewardParts {
  double speed = 0.0;    // r1
  double density = 0.0;  // r2
  double total = 0.0;
};

RewardParts reward(const GridField& field, int lane, int grid, const RewardWeights& w);
/// Rewards of all agents in cell order.
std::vector<RewardParts> reward_all(const GridField& field, const RewardWeights& w);

/// Events of one episode, drawn from the scenario ranges with the episode's event stream.
std::vector<roadsim::ScenarioEvent> draw_events(const ScenarioConfig& scenario, double warmup, Rng& rng);

struct StepResult {
  std::vector<float> rewards;  // per agent, cell order
  std::vector<float> speed_rewards;
  std::vector<float> density_rewards;
  bool done = false;
  std::optional<std::string> fault;  // set when the simulator broke an invariant
};

/// One row of the episode log.
struct ActionLogRow {
  int env_step;
  int lane;
  int grid;
  bool allow_left;
  bool allow_right;
  float reward;
};

/// Grid-level regulation environment over the microscopic simulator.
class RegulationEnv {
 public:
  RegulationEnv(const ScenarioConfig& scenario, const EnvConfig& cfg = {}, const RewardWeights& weights = {},
                const metrics::MetricConfig& metric_cfg = {});

  /// Fresh episode: empty road, events drawn from `seed`, warm-up under all-allow.
  /// Throws InvariantViolation if the warm-up itself faults.
  void reset(std::uint64_t seed);
  /// Applies the permission field for env_step seconds.
  StepResult step(const ActionField& actions);

  const GridSpec& grid() const { return grid_; }
  int agents() const { return static_cast<int>(grid_.cell_count()); }
  const GridField& field() const { return field_; }
  /// Observations of every agent, agent-major, kObservationSize each.
  const std::vector<float>& observations() const { return observations_; }
  /// Normalised cell features (4 per cell) of the current state.
  const std::vector<float>& features() const { return features_; }
  int env_steps() const { return env_steps_; }
  bool done() const { return env_steps_ >= cfg_.episode_length; }
  const roadsim::World& world() const { return *world_; }
  roadsim::World& world() { return *world_; }
  const ScenarioConfig& scenario() const { return scenario_; }
  const EnvConfig& config() const { return cfg_; }
  const RewardWeights& weights() const { return weights_; }
  ObservationScale scale() const { return {weights_.max_density, weights_.max_speed}; }

  /// Metrics of the episode so far (empty before any post-warm-up sample).
  std::optional<metrics::EpisodeMetrics> metrics() const { return accumulator_->finish(); }
  const metrics::MetricAccumulator& accumulator() const { return *accumulator_; }

  /// Called after every simulation step (warm-up included).
  void set_observer(std::function<void(const roadsim::World&)> fn) { observer_ = std::move(fn); }
  /// Keep per-step action/reward rows for export.
  void enable_action_log(bool on) { log_actions_ = on; }
  const std::vector<ActionLogRow>& action_log() const { return action_log_; }
  void write_action_log_csv(std::ostream& os) const;

 private:
  void sim_step(const ActionField& actions);
  void refresh_state();

  ScenarioConfig scenario_;
  EnvConfig cfg_;
  RewardWeights weights_;
  metrics::MetricConfig metric_cfg_;
  GridSpec grid_;
  std::unique_ptr<roadsim::World> world_;
  std::unique_ptr<metrics::MetricAccumulator> accumulator_;
  GridField field_;
  std::vector<float> observations_;
  std::vector<float> features_;
  int env_steps_ = 0;
  std::function<void(const roadsim::World&)> observer_;
  bool log_actions_ = false;
  std::vector<ActionLogRow> action_log_;
};

void to_json(nlohmann::json& j, const EventRanges& r);
void from_json(const nlohmann::json& j, EventRanges& r);
void to_json(nlohmann::json& j, const ScenarioConfig& s);
void from_json(const nlohmann::json& j, ScenarioConfig& s);
void to_json(nlohmann::json& j, const RewardWeights& w);
void from_json(const nlohmann::json& j, RewardWeights& w);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

}  // namespace lanereg::env
