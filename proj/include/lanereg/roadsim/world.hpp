#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "lanereg/actions.hpp"
#include "lanereg/common.hpp"
#include "lanereg/grid.hpp"
#include "lanereg/metrics.hpp"
#include "lanereg/roadsim/config.hpp"
#include "lanereg/roadsim/vehicle.hpp"

namespace lanereg::roadsim {

/// Nearest vehicles around a position in one lane, as bumper gaps.
struct LaneNeighbors {
  struct Other {
    double gap = 0.0;  // m, may be negative when the other vehicle overlaps longitudinally
    double v = 0.0;
    double time_gap = 1.4;  // follower's effective IDM time gap
  };
  bool exists = true;
  std::optional<Other> leader;
  std::optional<Other> follower;
};

/// The three lanes a vehicle can see: right (lane - 1), its own, left (lane + 1).
struct Surroundings {
  LaneNeighbors right;
  LaneNeighbors current;
  LaneNeighbors left;
};

/// Speed the vehicle expects to sustain in a lane: the IDM equilibrium speed behind the
/// lane's leader (capped by that leader's speed), or the free speed when no leader is
/// within the lookahead. An overlapping vehicle makes the lane worthless (0).
double anticipated_speed(const LaneNeighbors& lane, double free_speed, const IdmParams& idm,
                         double time_gap, const LaneChangeParams& lcp);

/// Instantaneous lane-change wish of a vehicle. Speed gains win over keeping right; leftward
/// gains need left_gain_threshold, rightward ones the larger right_gain_threshold.
std::optional<Intent> lane_change_intent(const Vehicle& veh, const Surroundings& around, double free_speed,
                                         const LaneChangeParams& lcp);

/// Gap acceptance in the target lane: the new leader is at least s0 ahead and the new
/// follower would brake no harder than lcp.safe_decel.
bool safety_check(const Vehicle& veh, const LaneNeighbors& target, const LaneChangeParams& lcp);

/// Executed (midpoint-crossing) lane change.
struct LaneChangeRecord {
  double t = 0.0;
  std::int64_t id = 0;
  int from_lane = 1;
  int to_lane = 1;
  Direction direction = Direction::left;
  bool is_cv = false;
  int grid = 0;  // grid where the manoeuvre was initiated
};

struct ExitRecord {
  double t = 0.0;
  std::int64_t id = 0;
  double spawn_time = 0.0;
  int lane_changes = 0;
  double co2 = 0.0;
  double ttc_exposure = 0.0;
};

/// One row of the trajectory export.
struct TrajectoryRow {
  double t;
  std::int64_t id;
  int lane;
  double x;
  double v;
  double accel;
  bool is_cv;
  int lc_state;  // 0 none, +1 changing left, -1 changing right
  int intent;    // instantaneous intent: 0 none, +1 left, -1 right
};

/// Counts of (vehicle, step) samples per lane grid and how many of them wanted to change.
struct IntentTally {
  GridSpec spec;
  std::vector<std::int64_t> vehicle_steps;
  std::vector<std::int64_t> left_intents;
  std::vector<std::int64_t> right_intents;

  explicit IntentTally(const GridSpec& s)
      : spec(s), vehicle_steps(s.cell_count()), left_intents(s.cell_count()), right_intents(s.cell_count()) {}
};

struct WorldStats {
  std::int64_t spawned = 0;
  std::int64_t despawned = 0;
  std::int64_t lane_changes = 0;
  std::int64_t lane_changes_cv = 0;
  std::int64_t lane_changes_hv = 0;
  std::int64_t gated_intents = 0;  // CV intent-steps blocked by the regulation field
  std::size_t max_queue = 0;       // longest entrance queue seen on any lane
};

/// Microscopic multi-lane freeway. Single-threaded; one instance per episode.
class World {
 public:
  World(const RoadConfig& road, const IdmParams& idm, const LaneChangeParams& lcp, const DemandConfig& demand,
        std::vector<ScenarioEvent> events = {}, const metrics::MetricConfig& metric_cfg = {});

  /// Advances one simulation step under the given per-grid permissions (held for the step).
  /// Throws InvariantViolation on overlap or negative speed; the world is then unusable.
  void step(const ActionField& permissions);

  /// Places a vehicle directly (tests, equilibrium studies). Returns its id.
  std::int64_t insert_vehicle(int lane, double x, double v, bool is_cv);

  double time() const { return static_cast<double>(steps_) * road_.sim_step; }
  std::int64_t step_count() const { return steps_; }
  const RoadConfig& road() const { return road_; }
  const IdmParams& idm() const { return idm_; }
  const LaneChangeParams& lane_change_params() const { return lcp_; }
  const DemandConfig& demand() const { return demand_; }
  const GridSpec& grid() const { return grid_; }
  const std::vector<ScenarioEvent>& events() const { return events_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  const Vehicle* find(std::int64_t id) const;
  const WorldStats& stats() const { return stats_; }
  std::size_t queue_length(int lane) const { return queues_[static_cast<std::size_t>(lane - 1)].size(); }
  std::size_t total_queued() const;

  /// Lane changes executed and vehicles removed during the last step.
  std::span<const LaneChangeRecord> step_lane_changes() const { return step_changes_; }
  std::span<const ExitRecord> step_exits() const { return step_exits_; }
  /// True for lane grids where an active degrade event forbids every lane change.
  bool hazardous(int lane, int grid) const { return hazard_[grid_.cell(lane, grid)] != 0; }

  Surroundings surroundings(const Vehicle& veh) const;
  std::vector<metrics::VehicleSample> samples() const;

  /// Optional instrumentation, off by default.
  void enable_trajectory_log(bool on) { log_trajectory_ = on; }
  const std::vector<TrajectoryRow>& trajectory() const { return trajectory_; }
  void enable_intent_tally(bool on);
  const std::optional<IntentTally>& intent_tally() const { return tally_; }

  /// Writes the trajectory log as CSV: t,id,lane,x,v,accel,is_cv,lc_state.
  void write_trajectory_csv(std::ostream& os) const;

 private:
  struct EventState {
    bool triggered = false;
    std::int64_t vehicle = -1;
  };

  void spawn_demand();
  bool entrance_admissible(int lane, double speed) const;
  void apply_events();
  void rebuild_occupancy();
  void insert_into_lane(int lane, std::size_t idx);
  LaneNeighbors neighbors_in_lane(int lane, double x, std::int64_t self) const;
  double leader_acceleration(const Vehicle& veh, int lane) const;
  double free_speed() const;
  void check_no_overlap() const;
  void record_step_instrumentation(const std::vector<std::int64_t>& ids,
                                   const std::vector<std::optional<Intent>>& intents);

  RoadConfig road_;
  IdmParams idm_;
  LaneChangeParams lcp_;
  DemandConfig demand_;
  std::vector<ScenarioEvent> events_;
  std::vector<EventState> event_state_;
  metrics::MetricConfig metric_cfg_;
  GridSpec grid_;
  int lc_total_steps_;
  double entry_speed_;
  double arrival_p_;

  Rng arrivals_rng_;
  Rng cv_rng_;

  std::int64_t steps_ = 0;
  std::int64_t next_id_ = 0;
  std::vector<Vehicle> vehicles_;  // ordered by id
  std::vector<std::deque<bool>> queues_;  // pending arrivals per lane (CV flag)
  std::vector<std::vector<std::size_t>> occupancy_;  // per lane, indices sorted by x
  std::vector<std::uint8_t> hazard_;
  std::vector<LaneChangeRecord> step_changes_;
  std::vector<ExitRecord> step_exits_;
  WorldStats stats_;

  bool log_trajectory_ = false;
  std::vector<TrajectoryRow> trajectory_;
  std::optional<IntentTally> tally_;
};

}  // namespace lanereg::roadsim
