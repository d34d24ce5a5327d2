#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanereg/roadsim/idm.hpp"

namespace lanereg::roadsim {

/// Road geometry and integration settings. Lanes are numbered 1..lanes, 1 = rightmost.
struct RoadConfig {
  double length = 1000.0;       // m
  int lanes = 5;
  double lane_width = 3.2;      // m
  double speed_limit = 24.59;   // m/s (55 mph)
  double sim_step = 0.1;        // s
  double lc_duration = 2.0;     // s, lane_width / 1.6 m/s lateral speed
  double lateral_resolution = 0.8;  // m
  /// Closed ring road: vehicles leaving x = L re-enter at x = 0 and nobody spawns.
  /// Used for equilibrium studies only.
  bool ring = false;

  void validate() const;
};

/// Parameters of the two-intent lane-change model (keep right / speed gain).
struct LaneChangeParams {
  // Defaults calibrated so all-allow lane changes per vehicle land near 0.09 / 0.05 / 0.01
  // for the low / high / congested presets.
  double keep_right_tolerance = 0.3;  // eps_kr, m/s
  double left_gain_threshold = 3.0;   // m/s
  double right_gain_threshold = 4.0;  // m/s, rightward speed gains need more deliberation
  double lookahead = 100.0;           // m, leaders further away are ignored
  double safe_decel = 2.0;            // b_safe, m/s^2
  double keep_right_persistence = 45.0;  // s an intent must hold before it is acted on
  double speed_gain_persistence = 10.0;  // s
  double cooldown = 10.0;               // s after a completed change

  void validate() const;
};

struct DemandConfig {
  double per_lane_inflow = 1100.0;  // veh/h/lane
  double cv_rate = 1.0;
  std::uint64_t seed = 0;
  /// Entry speed. Unset means the free-flow equilibrium speed for per_lane_inflow.
  std::optional<double> spawn_speed;

  void validate() const;
  /// Entry speed used by the simulator.
  double entry_speed(const IdmParams& idm) const;
};

enum class DemandLevel { low, high, congested_high };

/// Demand presets of the freeway study: (inflow, equilibrium speed) pairs on the IDM curve.
DemandConfig demand_preset(DemandLevel level, double cv_rate, std::uint64_t seed);
DemandLevel parse_demand_level(const std::string& name);
std::string to_string(DemandLevel level);

/// Free-flow equilibrium speed carrying `flow` veh/h on the IDM fundamental diagram.
double free_flow_speed_for_flow(double flow, const IdmParams& idm);

enum class EventKind { lane_degrade, vehicle_stop };

struct ScenarioEvent {
  EventKind kind = EventKind::lane_degrade;
  int lane = 1;
  std::array<double, 2> x_range{0.0, 0.0};  // m
  std::array<double, 2> t_range{0.0, 0.0};  // s
  double degrade_time_gap = 4.0;  // s, lane_degrade only
  double stop_decel = 3.0;        // m/s^2, vehicle_stop only
  double stop_hold = 60.0;        // s, vehicle_stop only

  /// Checks the event against a road; throws ConfigError when it does not fit.
  void validate(const RoadConfig& road) const;
  bool active(double t) const { return t >= t_range[0] && t <= t_range[1]; }
};

std::string to_string(EventKind kind);
EventKind parse_event_kind(const std::string& name);

// Structured-text (JSON) mapping. Keys mirror the field names above.
void to_json(nlohmann::json& j, const IdmParams& p);
void from_json(const nlohmann::json& j, IdmParams& p);
void to_json(nlohmann::json& j, const RoadConfig& c);
void from_json(const nlohmann::json& j, RoadConfig& c);
void to_json(nlohmann::json& j, const LaneChangeParams& c);
void from_json(const nlohmann::json& j, LaneChangeParams& c);
void to_json(nlohmann::json& j, const DemandConfig& c);
void from_json(const nlohmann::json& j, DemandConfig& c);
void to_json(nlohmann::json& j, const ScenarioEvent& e);
void from_json(const nlohmann::json& j, ScenarioEvent& e);

}  // namespace lanereg::roadsim
