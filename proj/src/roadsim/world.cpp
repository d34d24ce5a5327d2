#include "lanereg/roadsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace lanereg::roadsim {
namespace {

constexpr std::uint64_t kArrivalStream = 1;
constexpr std::uint64_t kCvStream = 2;

// Tabulated equilibrium speed behind a leader at bumper gap g, for the nominal time gap.
// The intent model evaluates it three times per vehicle per step.
class GapSpeedTable {
 public:
  static constexpr double kResolution = 0.05;
  static constexpr double kMaxGap = 400.0;

  explicit GapSpeedTable(const IdmParams& p) : params_(p) {
    const auto n = static_cast<std::size_t>(kMaxGap / kResolution) + 1;
    speeds_.resize(n);
    for (std::size_t i = 0; i < n; ++i) speeds_[i] = equilibrium_speed_for_gap(i * kResolution, p);
  }
  const IdmParams& params() const { return params_; }
  double operator()(double gap) const {
    if (gap >= kMaxGap) return equilibrium_speed_for_gap(gap, params_);
    const double u = gap / kResolution;
    const auto i = static_cast<std::size_t>(u);
    const double w = u - static_cast<double>(i);
    return speeds_[i] + w * (speeds_[i + 1] - speeds_[i]);
  }

 private:
  IdmParams params_;
  std::vector<double> speeds_;
};

double equilibrium_speed_behind(double gap, const IdmParams& p, double time_gap) {
  if (time_gap != p.time_gap) return equilibrium_speed_for_gap(gap, p, time_gap);
  thread_local std::optional<GapSpeedTable> table;
  if (!table || !(table->params() == p)) table.emplace(p);
  return (*table)(gap);
}

int direction_sign(Direction d) { return d == Direction::left ? 1 : -1; }

}  // namespace

double anticipated_speed(const LaneNeighbors& lane, double free_speed, const IdmParams& idm, double time_gap,
                         const LaneChangeParams& lcp) {
  if (!lane.exists) return 0.0;
  if (!lane.leader || lane.leader->gap > lcp.lookahead) return free_speed;
  if (lane.leader->gap <= 0.0) return 0.0;
  const double behind = equilibrium_speed_behind(lane.leader->gap, idm, time_gap);
  return std::min({free_speed, lane.leader->v, behind});
}

std::optional<Intent> lane_change_intent(const Vehicle& veh, const Surroundings& around, double free_speed,
                                         const LaneChangeParams& lcp) {
  const double T = veh.effective_time_gap;
  const double here = anticipated_speed(around.current, free_speed, veh.idm, T, lcp);
  if (around.left.exists) {
    const double left = anticipated_speed(around.left, free_speed, veh.idm, T, lcp);
    if (left - here >= lcp.left_gain_threshold) return Intent{Direction::left, IntentReason::speed_gain};
  }
  if (around.right.exists) {
    const double right = anticipated_speed(around.right, free_speed, veh.idm, T, lcp);
    if (right - here >= lcp.right_gain_threshold) return Intent{Direction::right, IntentReason::speed_gain};
    if (right >= here - lcp.keep_right_tolerance) return Intent{Direction::right, IntentReason::keep_right};
  }
  return std::nullopt;
}

bool safety_check(const Vehicle& veh, const LaneNeighbors& target, const LaneChangeParams& lcp) {
  if (!target.exists) return false;
  if (target.leader && target.leader->gap < veh.idm.min_gap) return false;
  if (target.follower) {
    const auto& f = *target.follower;
    if (f.gap <= 0.0) return false;
    const double a = idm_acceleration(f.v, f.gap, f.v - veh.v, veh.idm, f.time_gap);
    if (a < -lcp.safe_decel) return false;
  }
  return true;
}

World::World(const RoadConfig& road, const IdmParams& idm, const LaneChangeParams& lcp, const DemandConfig& demand,
             std::vector<ScenarioEvent> events, const metrics::MetricConfig& metric_cfg)
    : road_(road),
      idm_(idm),
      lcp_(lcp),
      demand_(demand),
      events_(std::move(events)),
      metric_cfg_(metric_cfg),
      grid_(GridSpec::for_road(road.length, road.lanes)),
      arrivals_rng_(make_stream(demand.seed, kArrivalStream)),
      cv_rng_(make_stream(demand.seed, kCvStream)) {
  road_.validate();
  idm_.validate();
  lcp_.validate();
  demand_.validate();
  for (const auto& e : events_) e.validate(road_);
  lc_total_steps_ = static_cast<int>(std::lround(road_.lc_duration / road_.sim_step));
  if (lc_total_steps_ < 2) throw ConfigError("RoadConfig: lc_duration must span at least two steps");
  entry_speed_ = demand_.entry_speed(idm_);
  arrival_p_ = demand_.per_lane_inflow * road_.sim_step / 3600.0;
  if (arrival_p_ > 1.0) throw ConfigError("DemandConfig: inflow exceeds one arrival per step");
  event_state_.resize(events_.size());
  queues_.resize(static_cast<std::size_t>(road_.lanes));
  occupancy_.resize(static_cast<std::size_t>(road_.lanes));
  hazard_.assign(grid_.cell_count(), 0);
  metric_cfg_.dt = road_.sim_step;
  metric_cfg_.vehicle_length = idm_.vehicle_length;
}

const Vehicle* World::find(std::int64_t id) const {
  auto it = std::lower_bound(vehicles_.begin(), vehicles_.end(), id,
                             [](const Vehicle& v, std::int64_t key) { return v.id < key; });
  return it != vehicles_.end() && it->id == id ? &*it : nullptr;
}

std::size_t World::total_queued() const {
  std::size_t n = 0;
  for (const auto& q : queues_) n += q.size();
  return n;
}

double World::free_speed() const { return std::min(idm_.desired_speed, road_.speed_limit); }

void World::enable_intent_tally(bool on) {
  if (on) {
    tally_.emplace(grid_);
  } else {
    tally_.reset();
  }
}

std::int64_t World::insert_vehicle(int lane, double x, double v, bool is_cv) {
  if (lane < 1 || lane > road_.lanes) throw ConfigError("insert_vehicle: lane outside the road");
  if (x < 0.0 || x > road_.length || v < 0.0) throw ConfigError("insert_vehicle: state outside the road");
  Vehicle veh;
  veh.id = next_id_++;
  veh.lane = lane;
  veh.x = x;
  veh.v = v;
  veh.is_cv = is_cv;
  veh.idm = idm_;
  veh.effective_time_gap = idm_.time_gap;
  veh.spawn_time = time();
  vehicles_.push_back(veh);
  ++stats_.spawned;
  rebuild_occupancy();
  return veh.id;
}

void World::rebuild_occupancy() {
  for (auto& lane : occupancy_) lane.clear();
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const auto& v = vehicles_[i];
    occupancy_[static_cast<std::size_t>(v.lane - 1)].push_back(i);
    if (const int other = v.other_lane(); other != 0) occupancy_[static_cast<std::size_t>(other - 1)].push_back(i);
  }
  for (auto& lane : occupancy_) {
    std::sort(lane.begin(), lane.end(), [this](std::size_t a, std::size_t b) {
      const auto& va = vehicles_[a];
      const auto& vb = vehicles_[b];
      return va.x != vb.x ? va.x < vb.x : va.id < vb.id;
    });
  }
}

void World::insert_into_lane(int lane, std::size_t idx) {
  auto& list = occupancy_[static_cast<std::size_t>(lane - 1)];
  const auto& veh = vehicles_[idx];
  auto pos = std::lower_bound(list.begin(), list.end(), idx, [this, &veh](std::size_t a, std::size_t) {
    const auto& va = vehicles_[a];
    return va.x != veh.x ? va.x < veh.x : va.id < veh.id;
  });
  list.insert(pos, idx);
}

LaneNeighbors World::neighbors_in_lane(int lane, double x, std::int64_t self) const {
  LaneNeighbors out;
  if (lane < 1 || lane > road_.lanes) {
    out.exists = false;
    return out;
  }
  const auto& list = occupancy_[static_cast<std::size_t>(lane - 1)];
  const double self_length = idm_.vehicle_length;
  // First entry at or beyond x (ties count as leaders).
  auto it = std::lower_bound(list.begin(), list.end(), x,
                             [this](std::size_t a, double key) { return vehicles_[a].x < key; });
  auto lead = it;
  while (lead != list.end() && vehicles_[*lead].id == self) ++lead;
  if (lead != list.end()) {
    const auto& l = vehicles_[*lead];
    out.leader = LaneNeighbors::Other{l.x - l.idm.vehicle_length - x, l.v, l.effective_time_gap};
  } else if (road_.ring) {
    for (std::size_t idx : list) {
      if (vehicles_[idx].id == self) continue;
      const auto& l = vehicles_[idx];
      out.leader = LaneNeighbors::Other{l.x + road_.length - l.idm.vehicle_length - x, l.v, l.effective_time_gap};
      break;
    }
  }
  auto follow = it;
  while (follow != list.begin()) {
    --follow;
    if (vehicles_[*follow].id == self) continue;
    const auto& f = vehicles_[*follow];
    out.follower = LaneNeighbors::Other{x - self_length - f.x, f.v, f.effective_time_gap};
    break;
  }
  if (!out.follower && road_.ring) {
    for (auto r = list.rbegin(); r != list.rend(); ++r) {
      if (vehicles_[*r].id == self) continue;
      const auto& f = vehicles_[*r];
      out.follower = LaneNeighbors::Other{x + road_.length - self_length - f.x, f.v, f.effective_time_gap};
      break;
    }
  }
  return out;
}

Surroundings World::surroundings(const Vehicle& veh) const {
  return {neighbors_in_lane(veh.lane - 1, veh.x, veh.id), neighbors_in_lane(veh.lane, veh.x, veh.id),
          neighbors_in_lane(veh.lane + 1, veh.x, veh.id)};
}

double World::leader_acceleration(const Vehicle& veh, int lane) const {
  const auto n = neighbors_in_lane(lane, veh.x, veh.id);
  if (!n.leader) return idm_acceleration(veh.v, kFreeRoadGap, 0.0, veh.idm, veh.effective_time_gap);
  // Overlaps beyond rounding are caught by the post-update check; a touching leader means full braking.
  const double gap = std::max(n.leader->gap, 1e-6);
  return idm_acceleration(veh.v, gap, veh.v - n.leader->v, veh.idm, veh.effective_time_gap);
}

bool World::entrance_admissible(int lane, double speed) const {
  const auto& list = occupancy_[static_cast<std::size_t>(lane - 1)];
  if (list.empty()) return true;
  const auto& l = vehicles_[list.front()];
  const double gap = l.x - l.idm.vehicle_length;
  if (gap < idm_.min_gap) return false;
  return idm_acceleration(speed, gap, speed - l.v, idm_) >= -lcp_.safe_decel;
}

void World::spawn_demand() {
  if (road_.ring) return;
  for (int lane = 1; lane <= road_.lanes; ++lane) {
    auto& queue = queues_[static_cast<std::size_t>(lane - 1)];
    if (bernoulli(arrivals_rng_, arrival_p_)) queue.push_back(bernoulli(cv_rng_, demand_.cv_rate));
    if (!queue.empty() && entrance_admissible(lane, entry_speed_)) {
      Vehicle veh;
      veh.id = next_id_++;
      veh.lane = lane;
      veh.x = 0.0;
      veh.v = entry_speed_;
      veh.is_cv = queue.front();
      veh.idm = idm_;
      veh.effective_time_gap = idm_.time_gap;
      veh.spawn_time = time();
      queue.pop_front();
      vehicles_.push_back(veh);
      ++stats_.spawned;
      insert_into_lane(lane, vehicles_.size() - 1);
    }
    stats_.max_queue = std::max(stats_.max_queue, queue.size());
  }
}

void World::apply_events() {
  const double t = time();
  std::fill(hazard_.begin(), hazard_.end(), 0);
  for (auto& v : vehicles_) v.effective_time_gap = v.idm.time_gap;
  for (std::size_t k = 0; k < events_.size(); ++k) {
    const auto& e = events_[k];
    auto& state = event_state_[k];
    if (e.kind == EventKind::lane_degrade) {
      if (!e.active(t)) continue;
      const int g0 = grid_.grid_of(e.x_range[0]);
      const int g1 = grid_.grid_of(std::max(e.x_range[0], e.x_range[1] - 1e-9));
      for (int g = g0; g <= g1; ++g) hazard_[grid_.cell(e.lane, g)] = 1;
      for (auto& v : vehicles_) {
        if (v.lane == e.lane && v.x >= e.x_range[0] && v.x <= e.x_range[1]) {
          v.effective_time_gap = std::max(v.effective_time_gap, e.degrade_time_gap);
        }
      }
    } else {
      if (state.triggered || !e.active(t)) continue;
      const double mid = 0.5 * (e.x_range[0] + e.x_range[1]);
      Vehicle* chosen = nullptr;
      for (auto& v : vehicles_) {
        if (v.lane != e.lane || v.changing() || v.stop_phase != StopPhase::none) continue;
        if (v.x < e.x_range[0] || v.x > e.x_range[1]) continue;
        if (!chosen || std::abs(v.x - mid) < std::abs(chosen->x - mid)) chosen = &v;
      }
      if (chosen) {
        chosen->stop_phase = StopPhase::braking;
        chosen->stop_decel = e.stop_decel;
        chosen->stop_hold_left = e.stop_hold;
        chosen->candidate.reset();
        chosen->candidate_age = 0.0;
        state.triggered = true;
        state.vehicle = chosen->id;
      }
    }
  }
}

void World::step(const ActionField& permissions) {
  const double dt = road_.sim_step;
  const double t_end = static_cast<double>(steps_ + 1) * dt;
  const bool gated = !permissions.cells().empty();
  if (gated && permissions.cells().size() != grid_.cell_count()) {
    throw ConfigError("World::step: permission field does not match the lane grid");
  }
  step_changes_.clear();
  step_exits_.clear();

  // Lateral progress of manoeuvres already under way.
  const int half = (lc_total_steps_ + 1) / 2;
  for (auto& v : vehicles_) {
    if (!v.lc) continue;
    auto& lc = *v.lc;
    ++lc.steps;
    if (!lc.switched && lc.steps >= half) {
      lc.switched = true;
      v.lane = lc.to_lane;
      ++v.lane_changes;
      ++stats_.lane_changes;
      ++(v.is_cv ? stats_.lane_changes_cv : stats_.lane_changes_hv);
      step_changes_.push_back({t_end, v.id, lc.from_lane, lc.to_lane, lc.direction, v.is_cv, lc.grid});
    }
    if (lc.steps >= lc_total_steps_) {
      v.lc.reset();
      v.cooldown = lcp_.cooldown;
    }
  }

  rebuild_occupancy();
  spawn_demand();
  apply_events();

  // Intents, gating, hazards, gap acceptance. Vehicles act in id order and each initiated
  // change is visible to the vehicles processed after it.
  std::vector<std::optional<Intent>> intents(vehicles_.size());
  const double v_free = free_speed();
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    auto& v = vehicles_[i];
    if (v.changing() || v.stop_phase == StopPhase::braking || v.stop_phase == StopPhase::holding) {
      v.candidate.reset();
      v.candidate_age = 0.0;
      continue;
    }
    if (v.cooldown > 0.0) {
      v.cooldown = std::max(0.0, v.cooldown - dt);
      v.candidate.reset();
      v.candidate_age = 0.0;
      continue;
    }
    const auto intent = lane_change_intent(v, surroundings(v), v_free, lcp_);
    intents[i] = intent;
    if (!intent) {
      v.candidate.reset();
      v.candidate_age = 0.0;
      continue;
    }
    if (v.candidate && v.candidate->direction == intent->direction) {
      v.candidate_age += dt;
      // A speed-gain reason upgrades the pending wish without restarting its clock.
      if (intent->reason == IntentReason::speed_gain) v.candidate->reason = IntentReason::speed_gain;
    } else {
      v.candidate = intent;
      v.candidate_age = dt;
    }
    const double needed = v.candidate->reason == IntentReason::speed_gain ? lcp_.speed_gain_persistence
                                                                           : lcp_.keep_right_persistence;
    if (v.candidate_age < needed - 1e-9) continue;

    const int grid = grid_.grid_of(v.x);
    const Direction dir = v.candidate->direction;
    const int target = v.lane + direction_sign(dir);
    if (v.is_cv && gated) {
      const auto& cell = permissions.at(v.lane, grid);
      if (!(dir == Direction::left ? cell.allow_left : cell.allow_right)) {
        ++stats_.gated_intents;
        continue;
      }
    }
    if (hazard_[grid_.cell(v.lane, grid)] || hazard_[grid_.cell(target, grid)]) continue;
    if (!safety_check(v, neighbors_in_lane(target, v.x, v.id), lcp_)) continue;
    v.lc = LaneChange{dir, 0, v.lane, target, false, grid};
    v.candidate.reset();
    v.candidate_age = 0.0;
    insert_into_lane(target, i);
  }

  // Longitudinal dynamics: a vehicle mid-change follows the closer constraint of both lanes.
  std::vector<double> accel(vehicles_.size());
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const auto& v = vehicles_[i];
    double a = leader_acceleration(v, v.lane);
    if (const int other = v.other_lane(); other != 0) a = std::min(a, leader_acceleration(v, other));
    if (v.stop_phase == StopPhase::braking) a = std::min(a, -v.stop_decel);
    if (v.stop_phase == StopPhase::holding) a = std::min(a, 0.0);
    accel[i] = a;
  }
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    auto& v = vehicles_[i];
    const double v_new = std::max(0.0, v.v + accel[i] * dt);
    v.accel = (v_new - v.v) / dt;
    v.v = v_new;
    v.x += v_new * dt;
    if (v.stop_phase == StopPhase::braking && v.v == 0.0) {
      v.stop_phase = StopPhase::holding;
    } else if (v.stop_phase == StopPhase::holding) {
      v.stop_hold_left -= dt;
      if (v.stop_hold_left <= 1e-9) v.stop_phase = StopPhase::released;
    }
  }

  if (road_.ring) {
    for (auto& v : vehicles_) {
      if (v.x >= road_.length) v.x -= road_.length;
    }
  }
  rebuild_occupancy();
  ++steps_;
  check_no_overlap();

  std::vector<std::int64_t> ids;
  if (log_trajectory_ || tally_) {
    ids.reserve(vehicles_.size());
    for (const auto& v : vehicles_) ids.push_back(v.id);
  }
  if (!road_.ring) {
    for (const auto& v : vehicles_) {
      if (v.x > road_.length) {
        step_exits_.push_back({t_end, v.id, v.spawn_time, v.lane_changes, v.cumulative_co2, v.cumulative_ttc_exposure});
      }
    }
    if (!step_exits_.empty()) {
      std::erase_if(vehicles_, [this](const Vehicle& v) { return v.x > road_.length; });
      stats_.despawned += static_cast<std::int64_t>(step_exits_.size());
      rebuild_occupancy();
    }
  }

  // Per-vehicle emission and TTC exposure against the leader in the vehicle's own lane.
  const double threshold = metric_cfg_.safety.ttc_threshold;
  for (int lane = 1; lane <= road_.lanes; ++lane) {
    const auto& list = occupancy_[static_cast<std::size_t>(lane - 1)];
    const Vehicle* ahead = nullptr;
    for (auto it = list.rbegin(); it != list.rend(); ++it) {
      auto& v = vehicles_[*it];
      if (v.lane != lane) continue;
      if (ahead && metrics::ttc(v.x, v.v, ahead->x, ahead->v, ahead->idm.vehicle_length) < threshold) {
        v.cumulative_ttc_exposure += dt;
      }
      v.cumulative_co2 += metrics::co2_rate(v.v, v.accel, metric_cfg_.emission) * dt;
      ahead = &v;
    }
  }

  if (log_trajectory_ || tally_) record_step_instrumentation(ids, intents);
}

void World::check_no_overlap() const {
  for (int lane = 1; lane <= road_.lanes; ++lane) {
    const auto& list = occupancy_[static_cast<std::size_t>(lane - 1)];
    const std::size_t n = list.size();
    if (n < 2) continue;
    const std::size_t pairs = road_.ring ? n : n - 1;
    for (std::size_t k = 0; k < pairs; ++k) {
      const auto& f = vehicles_[list[k]];
      const auto& l = vehicles_[list[(k + 1) % n]];
      const double lx = k + 1 < n ? l.x : l.x + road_.length;
      const double gap = lx - l.idm.vehicle_length - f.x;
      if (gap < -1e-9) {
        std::ostringstream os;
        os << "overlap at t=" << time() << " in lane " << lane << ": follower id=" << f.id << " x=" << f.x
           << " v=" << f.v << " lane=" << f.lane << (f.changing() ? " (changing)" : "") << ", leader id=" << l.id
           << " x=" << l.x << " v=" << l.v << " lane=" << l.lane << (l.changing() ? " (changing)" : "")
           << ", gap=" << gap;
        throw InvariantViolation(os.str());
      }
    }
  }
}

std::vector<metrics::VehicleSample> World::samples() const {
  std::vector<metrics::VehicleSample> out;
  out.reserve(vehicles_.size());
  for (const auto& v : vehicles_) out.push_back({v.id, v.lane, v.x, v.v, v.accel});
  return out;
}

void World::record_step_instrumentation(const std::vector<std::int64_t>& ids,
                                        const std::vector<std::optional<Intent>>& intents) {
  // `ids` is the pre-despawn vehicle list, a superset of the current one in the same order.
  const double t = time();
  std::size_t k = 0;
  for (const auto& v : vehicles_) {
    while (k < ids.size() && ids[k] < v.id) ++k;
    const int intent = k < ids.size() && ids[k] == v.id && intents[k] ? direction_sign(intents[k]->direction) : 0;
    if (log_trajectory_) {
      const int lc_state = v.lc ? direction_sign(v.lc->direction) : 0;
      trajectory_.push_back({t, v.id, v.lane, v.x, v.v, v.accel, v.is_cv, lc_state, intent});
    }
    if (tally_) {
      const auto cell = grid_.cell(v.lane, grid_.grid_of(v.x));
      ++tally_->vehicle_steps[cell];
      if (intent > 0) ++tally_->left_intents[cell];
      if (intent < 0) ++tally_->right_intents[cell];
    }
  }
}

void World::write_trajectory_csv(std::ostream& os) const {
  os << "t,id,lane,x,v,accel,is_cv,lc_state\n";
  for (const auto& r : trajectory_) {
    os << r.t << ',' << r.id << ',' << r.lane << ',' << r.x << ',' << r.v << ',' << r.accel << ','
       << (r.is_cv ? 1 : 0) << ',' << r.lc_state << '\n';
  }
}

}  // namespace lanereg::roadsim
