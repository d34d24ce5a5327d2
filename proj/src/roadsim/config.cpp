#include "lanereg/roadsim/config.hpp"

#include <cmath>

#include "lanereg/common.hpp"

namespace lanereg::roadsim {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(what);
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

}  // namespace

void RoadConfig::validate() const {
  require(length > 0.0 && std::isfinite(length), "RoadConfig: length must be positive");
  require(lanes >= 1, "RoadConfig: at least one lane");
  require(lane_width > 0.0, "RoadConfig: lane_width must be positive");
  require(speed_limit > 0.0, "RoadConfig: speed_limit must be positive");
  require(sim_step > 0.0 && sim_step <= 1.0, "RoadConfig: sim_step must be in (0, 1]");
  require(lc_duration >= 2.0 * sim_step, "RoadConfig: lc_duration must span at least two steps");
  require(lateral_resolution > 0.0 && lateral_resolution <= lane_width,
          "RoadConfig: lateral_resolution must be in (0, lane_width]");
}

void LaneChangeParams::validate() const {
  require(keep_right_tolerance >= 0.0, "LaneChangeParams: keep_right_tolerance must be >= 0");
  require(left_gain_threshold >= 0.0 && right_gain_threshold >= 0.0,
          "LaneChangeParams: gain thresholds must be >= 0");
  require(lookahead > 0.0, "LaneChangeParams: lookahead must be positive");
  require(safe_decel > 0.0, "LaneChangeParams: safe_decel must be positive");
  require(keep_right_persistence >= 0.0 && speed_gain_persistence >= 0.0 && cooldown >= 0.0,
          "LaneChangeParams: persistence and cooldown must be >= 0");
}

void DemandConfig::validate() const {
  require(per_lane_inflow >= 0.0 && std::isfinite(per_lane_inflow), "DemandConfig: inflow must be >= 0");
  require(per_lane_inflow <= 36000.0, "DemandConfig: inflow above one vehicle per step per lane");
  require(cv_rate >= 0.0 && cv_rate <= 1.0, "DemandConfig: cv_rate must be in [0, 1]");
  if (spawn_speed) require(*spawn_speed >= 0.0, "DemandConfig: spawn_speed must be >= 0");
}

double free_flow_speed_for_flow(double flow, const IdmParams& idm) {
  if (flow <= 0.0) return idm.desired_speed;
  // Flow rises with v on the free-flow branch, which starts at the capacity speed.
  double v_cap = 0.0;
  double q_cap = 0.0;
  for (int k = 1; k < 2000; ++k) {
    const double v = idm.desired_speed * k / 2000.0;
    const double q = equilibrium_state(v, idm).flow;
    if (q > q_cap) {
      q_cap = q;
      v_cap = v;
    }
  }
  if (flow >= q_cap) return v_cap;
  double lo = v_cap;
  double hi = idm.desired_speed * (1.0 - 1e-12);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (equilibrium_state(mid, idm).flow > flow) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double DemandConfig::entry_speed(const IdmParams& idm) const {
  if (spawn_speed) return *spawn_speed;
  return free_flow_speed_for_flow(per_lane_inflow, idm);
}

DemandConfig demand_preset(DemandLevel level, double cv_rate, std::uint64_t seed) {
  DemandConfig d;
  d.cv_rate = cv_rate;
  d.seed = seed;
  switch (level) {
    case DemandLevel::low:
      d.per_lane_inflow = 1100.0;
      d.spawn_speed = 22.93;
      break;
    case DemandLevel::high:
      d.per_lane_inflow = 1495.0;
      d.spawn_speed = 20.76;
      break;
    case DemandLevel::congested_high:
      d.per_lane_inflow = 1410.0;
      d.spawn_speed = 6.53;
      break;
  }
  return d;
}

DemandLevel parse_demand_level(const std::string& name) {
  if (name == "low") return DemandLevel::low;
  if (name == "high") return DemandLevel::high;
  if (name == "congested_high") return DemandLevel::congested_high;
  throw ConfigError("unknown demand level '" + name + "' (expected low, high, congested_high)");
}

std::string to_string(DemandLevel level) {
  switch (level) {
    case DemandLevel::low: return "low";
    case DemandLevel::high: return "high";
    case DemandLevel::congested_high: return "congested_high";
  }
  return "?";
}

void ScenarioEvent::validate(const RoadConfig& road) const {
  require(lane >= 1 && lane <= road.lanes, "ScenarioEvent: lane outside the road");
  require(x_range[0] >= 0.0 && x_range[1] <= road.length && x_range[0] < x_range[1],
          "ScenarioEvent: x_range must be a non-empty interval inside [0, L]");
  require(t_range[0] >= 0.0 && t_range[0] <= t_range[1], "ScenarioEvent: t_range must be well ordered");
  if (kind == EventKind::lane_degrade) {
    require(degrade_time_gap >= 4.0 && degrade_time_gap <= 10.0,
            "ScenarioEvent: degrade_time_gap must lie in [4, 10] s");
  } else {
    require(stop_decel > 0.0, "ScenarioEvent: stop_decel must be positive");
    require(stop_hold >= 0.0, "ScenarioEvent: stop_hold must be >= 0");
  }
}

std::string to_string(EventKind kind) {
  return kind == EventKind::lane_degrade ? "lane_degrade" : "vehicle_stop";
}

EventKind parse_event_kind(const std::string& name) {
  if (name == "lane_degrade") return EventKind::lane_degrade;
  if (name == "vehicle_stop") return EventKind::vehicle_stop;
  throw ConfigError("unknown event kind '" + name + "'");
}

void to_json(nlohmann::json& j, const IdmParams& p) {
  j = {{"vehicle_length", p.vehicle_length}, {"desired_speed", p.desired_speed},
       {"time_gap", p.time_gap},             {"min_gap", p.min_gap},
       {"accel_exponent", p.accel_exponent}, {"max_accel", p.max_accel},
       {"comfort_decel", p.comfort_decel}};
}

void from_json(const nlohmann::json& j, IdmParams& p) {
  read_opt(j, "vehicle_length", p.vehicle_length);
  read_opt(j, "desired_speed", p.desired_speed);
  read_opt(j, "time_gap", p.time_gap);
  read_opt(j, "min_gap", p.min_gap);
  read_opt(j, "accel_exponent", p.accel_exponent);
  read_opt(j, "max_accel", p.max_accel);
  read_opt(j, "comfort_decel", p.comfort_decel);
}

void to_json(nlohmann::json& j, const RoadConfig& c) {
  j = {{"length", c.length},           {"lanes", c.lanes},
       {"lane_width", c.lane_width},   {"speed_limit", c.speed_limit},
       {"sim_step", c.sim_step},       {"lc_duration", c.lc_duration},
       {"lateral_resolution", c.lateral_resolution}, {"ring", c.ring}};
}

void from_json(const nlohmann::json& j, RoadConfig& c) {
  read_opt(j, "length", c.length);
  read_opt(j, "lanes", c.lanes);
  read_opt(j, "lane_width", c.lane_width);
  read_opt(j, "speed_limit", c.speed_limit);
  read_opt(j, "sim_step", c.sim_step);
  read_opt(j, "lc_duration", c.lc_duration);
  read_opt(j, "lateral_resolution", c.lateral_resolution);
  read_opt(j, "ring", c.ring);
}

void to_json(nlohmann::json& j, const LaneChangeParams& c) {
  j = {{"keep_right_tolerance", c.keep_right_tolerance},
       {"left_gain_threshold", c.left_gain_threshold},
       {"right_gain_threshold", c.right_gain_threshold},
       {"lookahead", c.lookahead},
       {"safe_decel", c.safe_decel},
       {"keep_right_persistence", c.keep_right_persistence},
       {"speed_gain_persistence", c.speed_gain_persistence},
       {"cooldown", c.cooldown}};
}

void from_json(const nlohmann::json& j, LaneChangeParams& c) {
  read_opt(j, "keep_right_tolerance", c.keep_right_tolerance);
  read_opt(j, "left_gain_threshold", c.left_gain_threshold);
  read_opt(j, "right_gain_threshold", c.right_gain_threshold);
  read_opt(j, "lookahead", c.lookahead);
  read_opt(j, "safe_decel", c.safe_decel);
  read_opt(j, "keep_right_persistence", c.keep_right_persistence);
  read_opt(j, "speed_gain_persistence", c.speed_gain_persistence);
  read_opt(j, "cooldown", c.cooldown);
}

void to_json(nlohmann::json& j, const DemandConfig& c) {
  j = {{"per_lane_inflow", c.per_lane_inflow}, {"cv_rate", c.cv_rate}, {"seed", c.seed}};
  if (c.spawn_speed) j["spawn_speed"] = *c.spawn_speed;
}

void from_json(const nlohmann::json& j, DemandConfig& c) {
  read_opt(j, "per_lane_inflow", c.per_lane_inflow);
  read_opt(j, "cv_rate", c.cv_rate);
  read_opt(j, "seed", c.seed);
  if (auto it = j.find("spawn_speed"); it != j.end() && !it->is_null()) c.spawn_speed = it->get<double>();
}

void to_json(nlohmann::json& j, const ScenarioEvent& e) {
  j = {{"kind", to_string(e.kind)},
       {"lane", e.lane},
       {"x_range", e.x_range},
       {"t_range", e.t_range},
       {"degrade_time_gap", e.degrade_time_gap},
       {"stop_decel", e.stop_decel},
       {"stop_hold", e.stop_hold}};
}

void from_json(const nlohmann::json& j, ScenarioEvent& e) {
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  read_opt(j, "lane", e.lane);
  read_opt(j, "x_range", e.x_range);
  read_opt(j, "t_range", e.t_range);
  read_opt(j, "degrade_time_gap", e.degrade_time_gap);
  read_opt(j, "stop_decel", e.stop_decel);
  read_opt(j, "stop_hold", e.stop_hold);
}

}  // namespace lanereg::roadsim
