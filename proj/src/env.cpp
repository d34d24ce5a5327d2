#include "lanereg/env.hpp"

#include <cmath>
#include <ostream>

#include "lanereg/common.hpp"

namespace lanereg::env {
namespace {

constexpr std::uint64_t kEventStream = 3;

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

void require_range(const std::array<double, 2>& r, const char* what) {
  require(std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1], what);
}

// n = a / b for a whole number n >= 1, within rounding.
int whole_ratio(double a, double b, const char* what) {
  const double r = a / b;
  const double n = std::round(r);
  require(n >= 1.0 && std::abs(r - n) < 1e-9, what);
  return static_cast<int>(n);
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

}  // namespace

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::stable_flow: return "stable_flow";
    case ScenarioKind::lane_degrade: return "lane_degrade";
    case ScenarioKind::vehicle_stop: return "vehicle_stop";
  }
  return "?";
}

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "stable_flow") return ScenarioKind::stable_flow;
  if (name == "lane_degrade") return ScenarioKind::lane_degrade;
  if (name == "vehicle_stop") return ScenarioKind::vehicle_stop;
  throw ConfigError("unknown scenario '" + name + "' (expected stable_flow, lane_degrade, vehicle_stop)");
}

void EventRanges::validate() const {
  require_range(degrade_start, "EventRanges: degrade_start");
  require_range(degrade_length, "EventRanges: degrade_length");
  require_range(degrade_gap, "EventRanges: degrade_gap");
  require(degrade_gap[0] >= 4.0 && degrade_gap[1] <= 10.0, "EventRanges: degrade_gap must stay inside [4, 10] s");
  require_range(degrade_duration, "EventRanges: degrade_duration");
  require_range(stop_start, "EventRanges: stop_start");
  require(stop_window > 0.0, "EventRanges: stop_window must be positive");
  require_range(stop_hold, "EventRanges: stop_hold");
  require(stop_hold[0] >= 0.0, "EventRanges: stop_hold must be >= 0");
  require(stop_decel > 0.0, "EventRanges: stop_decel must be positive");
  require_range(trigger, "EventRanges: trigger");
  require(trigger[0] >= 0.0, "EventRanges: trigger must not precede the warm-up end");
  require(stop_trigger_window >= 0.0, "EventRanges: stop_trigger_window must be >= 0");
}

void ScenarioConfig::validate() const {
  require(cv_rate >= 0.0 && cv_rate <= 1.0, "ScenarioConfig: cv_rate must be in [0, 1]");
  require(!inflow || *inflow >= 0.0, "ScenarioConfig: inflow must be non-negative");
  road.validate();
  idm.validate();
  lane_change.validate();
  events.validate();
  if (kind == ScenarioKind::lane_degrade) {
    require(events.degrade_start[0] >= 0.0 && events.degrade_start[1] + events.degrade_length[1] <= road.length,
            "ScenarioConfig: degrade zone range leaves the road");
  }
  if (kind == ScenarioKind::vehicle_stop) {
    require(events.stop_start[0] >= 0.0 && events.stop_start[1] + events.stop_window <= road.length,
            "ScenarioConfig: stop range leaves the road");
  }
}

void RewardWeights::validate() const {
  require(speed_weight >= 0.0 && density_weight >= 0.0, "RewardWeights: weights must be >= 0");
  require(std::abs(speed_weight + density_weight - 1.0) < 1e-9, "RewardWeights: weights must sum to 1");
  require(max_speed > 0.0 && max_density > 0.0, "RewardWeights: normalisers must be positive");
}

void EnvConfig::validate(double sim_step) const {
  whole_ratio(env_step, reward_step, "EnvConfig: env_step must be a multiple of reward_step");
  whole_ratio(reward_step, sim_step, "EnvConfig: reward_step must be a multiple of the simulation step");
  require(episode_length >= 0, "EnvConfig: episode_length must be >= 0");
  require(warmup >= 0.0, "EnvConfig: warmup must be >= 0");
  const double w = warmup / sim_step;
  require(std::abs(w - std::round(w)) < 1e-9, "EnvConfig: warmup must be a multiple of the simulation step");
}

int EnvConfig::sim_steps_per_env_step(double sim_step) const {
  return whole_ratio(env_step, sim_step, "EnvConfig: env_step must be a multiple of the simulation step");
}

int EnvConfig::reward_samples() const {
  return whole_ratio(env_step, reward_step, "EnvConfig: env_step must be a multiple of reward_step");
}

std::vector<std::pair<int, int>> neighborhood(const GridSpec& spec, int lane, int grid) {
  std::vector<std::pair<int, int>> out;
  for (int l = std::max(1, lane - 1); l <= std::min(spec.n_lanes, lane + 1); ++l) {
    for (int g = std::max(0, grid - 2); g <= std::min(spec.n_grids - 1, grid + 2); ++g) out.emplace_back(l, g);
  }
  return out;
}

RewardParts reward(const GridField& field, int lane, int grid, const RewardWeights& w) {
  const auto& spec = field.spec();
  double speed = 0.0;
  double density = 0.0;
  int n = 0;
  for (int l = std::max(1, lane - 1); l <= std::min(spec.n_lanes, lane + 1); ++l) {
    for (int g = std::max(0, grid - 2); g <= std::min(spec.n_grids - 1, grid + 2); ++g) {
      const auto& s = field.at(l, g);
      speed += std::clamp(s.speed / w.max_speed, 0.0, 1.0);
      density += 1.0 - std::clamp(s.density / w.max_density, 0.0, 1.0);
      ++n;
    }
  }
  RewardParts r;
  r.speed = speed / n;
  r.density = density / n;
  r.total = w.speed_weight * r.speed + w.density_weight * r.density;
  return r;
}

std::vector<RewardParts> reward_all(const GridField& field, const RewardWeights& w) {
  const auto& spec = field.spec();
  std::vector<RewardParts> out(spec.cell_count());
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    for (int g = 0; g < spec.n_grids; ++g) out[spec.cell(lane, g)] = reward(field, lane, g, w);
  }
  return out;
}

std::vector<roadsim::ScenarioEvent> draw_events(const ScenarioConfig& scenario, double warmup, Rng& rng) {
  std::vector<roadsim::ScenarioEvent> events;
  const auto& r = scenario.events;
  const auto lane = [&] { return 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(scenario.road.lanes))); };
  const auto draw = [&](const std::array<double, 2>& range) { return uniform(rng, range[0], range[1]); };
  if (scenario.kind == ScenarioKind::lane_degrade) {
    roadsim::ScenarioEvent e;
    e.kind = roadsim::EventKind::lane_degrade;
    e.lane = lane();
    const double x0 = draw(r.degrade_start);
    e.x_range = {x0, std::min(scenario.road.length, x0 + draw(r.degrade_length))};
    const double t0 = warmup + draw(r.trigger);
    e.t_range = {t0, t0 + draw(r.degrade_duration)};
    e.degrade_time_gap = draw(r.degrade_gap);
    events.push_back(e);
  } else if (scenario.kind == ScenarioKind::vehicle_stop) {
    roadsim::ScenarioEvent e;
    e.kind = roadsim::EventKind::vehicle_stop;
    e.lane = lane();
    const double x0 = draw(r.stop_start);
    e.x_range = {x0, x0 + r.stop_window};
    const double t0 = warmup + draw(r.trigger);
    e.t_range = {t0, t0 + r.stop_trigger_window};
    e.stop_decel = r.stop_decel;
    e.stop_hold = draw(r.stop_hold);
    events.push_back(e);
  }
  return events;
}

RegulationEnv::RegulationEnv(const ScenarioConfig& scenario, const EnvConfig& cfg, const RewardWeights& weights,
                             const metrics::MetricConfig& metric_cfg)
    : scenario_(scenario),
      cfg_(cfg),
      weights_(weights),
      metric_cfg_(metric_cfg),
      grid_(GridSpec::for_road(scenario.road.length, scenario.road.lanes)) {
  scenario_.validate();
  cfg_.validate(scenario_.road.sim_step);
  weights_.validate();
  metric_cfg_.dt = scenario_.road.sim_step;
  metric_cfg_.warmup = cfg_.warmup;
  metric_cfg_.vehicle_length = scenario_.idm.vehicle_length;
}

void RegulationEnv::reset(std::uint64_t seed) {
  Rng event_rng = make_stream(seed, kEventStream);
  auto events = draw_events(scenario_, cfg_.warmup, event_rng);
  auto demand = roadsim::demand_preset(scenario_.demand, scenario_.cv_rate, seed);
  if (scenario_.inflow) {
    demand.per_lane_inflow = *scenario_.inflow;
    demand.spawn_speed.reset();
  }
  world_ = std::make_unique<roadsim::World>(scenario_.road, scenario_.idm, scenario_.lane_change, demand,
                                            std::move(events), metric_cfg_);
  accumulator_ = std::make_unique<metrics::MetricAccumulator>(metric_cfg_);
  env_steps_ = 0;
  action_log_.clear();
  const ActionField allow = ActionField::allow_all(grid_);
  const auto warm = static_cast<long>(std::llround(cfg_.warmup / scenario_.road.sim_step));
  for (long k = 0; k < warm; ++k) sim_step(allow);
  refresh_state();
}

void RegulationEnv::sim_step(const ActionField& actions) {
  world_->step(actions);
  const double t = world_->time();
  const auto samples = world_->samples();
  accumulator_->observe_step(t, samples);
  for (const auto& c : world_->step_lane_changes()) accumulator_->record_lane_change(c.t);
  for (const auto& e : world_->step_exits()) accumulator_->record_exit(e.id, e.t);
  if (observer_) observer_(*world_);
}

void RegulationEnv::refresh_state() {
  field_ = aggregate_vehicles(world_->vehicles(), grid_, weights_.max_speed);
  observe_all(field_, scale(), observations_);
  features_.resize(grid_.cell_count() * kGridFeatures);
  normalize_field(field_, scale(), features_.data());
}

StepResult RegulationEnv::step(const ActionField& actions) {
  if (!world_) throw ConfigError("RegulationEnv::step before reset");
  if (actions.cells().size() != grid_.cell_count()) throw ConfigError("RegulationEnv::step: action field size mismatch");
  if (done()) throw ConfigError("RegulationEnv::step: episode already finished");
  const int per_sample = static_cast<int>(std::lround(cfg_.reward_step / scenario_.road.sim_step));
  const int samples = cfg_.reward_samples();
  const std::size_t n = grid_.cell_count();
  StepResult out;
  std::vector<double> total(n, 0.0);
  std::vector<double> speed(n, 0.0);
  std::vector<double> density(n, 0.0);
  accumulator_->record_actions(actions);
  try {
    for (int s = 0; s < samples; ++s) {
      for (int k = 0; k < per_sample; ++k) sim_step(actions);
      const auto sampled = aggregate_vehicles(world_->vehicles(), grid_, weights_.max_speed);
      const auto r = reward_all(sampled, weights_);
      for (std::size_t c = 0; c < n; ++c) {
        total[c] += r[c].total;
        speed[c] += r[c].speed;
        density[c] += r[c].density;
      }
    }
  } catch (const InvariantViolation& e) {
    out.done = true;
    out.fault = e.what();
    env_steps_ = cfg_.episode_length;
    return out;
  }
  out.rewards.resize(n);
  out.speed_rewards.resize(n);
  out.density_rewards.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    out.rewards[c] = static_cast<float>(total[c] / samples);
    out.speed_rewards[c] = static_cast<float>(speed[c] / samples);
    out.density_rewards[c] = static_cast<float>(density[c] / samples);
  }
  if (log_actions_) {
    for (int lane = 1; lane <= grid_.n_lanes; ++lane) {
      for (int g = 0; g < grid_.n_grids; ++g) {
        const auto c = grid_.cell(lane, g);
        const auto& a = actions.cells()[c];
        action_log_.push_back({env_steps_, lane, g, a.allow_left, a.allow_right, out.rewards[c]});
      }
    }
  }
  ++env_steps_;
  refresh_state();
  out.done = done();
  return out;
}

void RegulationEnv::write_action_log_csv(std::ostream& os) const {
  os << "env_step,lane,grid,action_left,action_right,reward\n";
  for (const auto& r : action_log_) {
    os << r.env_step << ',' << r.lane << ',' << r.grid << ',' << (r.allow_left ? 1 : 0) << ','
       << (r.allow_right ? 1 : 0) << ',' << r.reward << '\n';
  }
}

void to_json(nlohmann::json& j, const EventRanges& r) {
  j = {{"degrade_start", r.degrade_start},       {"degrade_length", r.degrade_length},
       {"degrade_gap", r.degrade_gap},           {"degrade_duration", r.degrade_duration},
       {"stop_start", r.stop_start},             {"stop_window", r.stop_window},
       {"stop_hold", r.stop_hold},               {"stop_decel", r.stop_decel},
       {"trigger", r.trigger},                   {"stop_trigger_window", r.stop_trigger_window}};
}

void from_json(const nlohmann::json& j, EventRanges& r) {
  read_opt(j, "degrade_start", r.degrade_start);
  read_opt(j, "degrade_length", r.degrade_length);
  read_opt(j, "degrade_gap", r.degrade_gap);
  read_opt(j, "degrade_duration", r.degrade_duration);
  read_opt(j, "stop_start", r.stop_start);
  read_opt(j, "stop_window", r.stop_window);
  read_opt(j, "stop_hold", r.stop_hold);
  read_opt(j, "stop_decel", r.stop_decel);
  read_opt(j, "trigger", r.trigger);
  read_opt(j, "stop_trigger_window", r.stop_trigger_window);
}

void to_json(nlohmann::json& j, const ScenarioConfig& s) {
  j = {{"scenario", to_string(s.kind)},
       {"demand", roadsim::to_string(s.demand)},
       {"cv_rate", s.cv_rate},
       {"road", s.road},
       {"idm", s.idm},
       {"lane_change", s.lane_change},
       {"events", s.events}};
  if (s.inflow) j["inflow"] = *s.inflow;
}

void from_json(const nlohmann::json& j, ScenarioConfig& s) {
  if (auto it = j.find("scenario"); it != j.end()) s.kind = parse_scenario(it->get<std::string>());
  if (auto it = j.find("demand"); it != j.end()) s.demand = roadsim::parse_demand_level(it->get<std::string>());
  read_opt(j, "cv_rate", s.cv_rate);
  if (auto it = j.find("inflow"); it != j.end() && !it->is_null()) s.inflow = it->get<double>();
  read_opt(j, "road", s.road);
  read_opt(j, "idm", s.idm);
  read_opt(j, "lane_change", s.lane_change);
  read_opt(j, "events", s.events);
}

void to_json(nlohmann::json& j, const RewardWeights& w) {
  j = {{"speed_weight", w.speed_weight},
       {"density_weight", w.density_weight},
       {"max_speed", w.max_speed},
       {"max_density", w.max_density}};
}

void from_json(const nlohmann::json& j, RewardWeights& w) {
  read_opt(j, "speed_weight", w.speed_weight);
  read_opt(j, "density_weight", w.density_weight);
  read_opt(j, "max_speed", w.max_speed);
  read_opt(j, "max_density", w.max_density);
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = {{"env_step", c.env_step}, {"reward_step", c.reward_step}, {"episode_length", c.episode_length},
       {"warmup", c.warmup}};
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  read_opt(j, "env_step", c.env_step);
  read_opt(j, "reward_step", c.reward_step);
  read_opt(j, "episode_length", c.episode_length);
  read_opt(j, "warmup", c.warmup);
}

}  // namespace lanereg::env
