#include "lanereg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lanereg/common.hpp"

namespace lanereg::metrics {

double ttc(double follower_x, double follower_v, double leader_x, double leader_v, double vehicle_length) {
  const double gap = leader_x - follower_x - vehicle_length;
  if (gap < -1e-9) {
    std::ostringstream os;
    os << "ttc: overlapping vehicles (follower x=" << follower_x << ", leader x=" << leader_x << ")";
    throw InvariantViolation(os.str());
  }
  const double closing = follower_v - leader_v;
  if (closing <= 0.0) return std::numeric_limits<double>::infinity();
  return std::max(gap, 0.0) / closing;
}

double co2_rate(double v, double accel, const EmissionParams& p) {
  const double power = p.mass * v * (accel + kGravity * p.rolling_coefficient) +
                       0.5 * p.air_density * p.drag_area * v * v * v;
  return std::max(p.idle_rate, p.idle_rate + p.grams_per_joule * std::max(power, 0.0));
}

double mean_ttc_exposure(std::span<const VehicleExposure> vehicles, double dt) {
  double total = 0.0;
  std::int64_t n = 0;
  for (const auto& e : vehicles) {
    if (e.steps == 0) continue;
    total += static_cast<double>(e.below_steps) * dt;
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

double tet(std::span<const VehicleExposure> vehicles, std::size_t* excluded) {
  double total = 0.0;
  std::size_t n = 0;
  std::size_t skipped = 0;
  for (const auto& e : vehicles) {
    if (e.steps == 0) {
      ++skipped;
      continue;
    }
    total += static_cast<double>(e.below_steps) / static_cast<double>(e.steps);
    ++n;
  }
  if (excluded) *excluded = skipped;
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

void add_to_distribution(ActionRateTable& table, const ActionField& actions) {
  const auto& spec = actions.spec();
  if (table.size() < static_cast<std::size_t>(spec.n_lanes)) table.resize(static_cast<std::size_t>(spec.n_lanes));
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    auto& c = table[static_cast<std::size_t>(lane - 1)];
    for (int g = 0; g < spec.n_grids; ++g) {
      const GridAction a = actions.at(lane, g);
      ++c.samples;
      c.left_allowed += a.allow_left;
      c.right_allowed += a.allow_right;
      c.both_allowed += (a.allow_left && a.allow_right);
      c.any_allowed += (a.allow_left || a.allow_right);
      c.left_only += (a.allow_left && !a.allow_right);
      c.right_only += (!a.allow_left && a.allow_right);
    }
  }
}

ActionRateTable action_distribution(std::span<const ActionField> log) {
  ActionRateTable table;
  for (const auto& f : log) add_to_distribution(table, f);
  return table;
}

double lane_change_count(std::int64_t executed_changes, std::int64_t vehicles_despawned) {
  if (vehicles_despawned <= 0) return 0.0;
  return static_cast<double>(executed_changes) / static_cast<double>(vehicles_despawned);
}

MetricAccumulator::Track& MetricAccumulator::track(std::int64_t id) { return tracks_[id]; }

void MetricAccumulator::observe_step(double t, std::span<const VehicleSample> vehicles) {
  const bool in_window = t >= cfg_.warmup - 1e-9;
  scratch_.assign(vehicles.begin(), vehicles.end());
  std::sort(scratch_.begin(), scratch_.end(), [](const VehicleSample& a, const VehicleSample& b) {
    if (a.lane != b.lane) return a.lane < b.lane;
    if (a.x != b.x) return a.x < b.x;
    return a.id < b.id;
  });
  for (std::size_t k = 0; k < scratch_.size(); ++k) {
    const auto& s = scratch_[k];
    Track& tr = track(s.id);
    if (!tr.seen) {
      tr.seen = true;
      tr.first_seen = t;
    }
    if (!in_window) continue;
    ++tr.steps;
    tr.distance += s.v * cfg_.dt;
    tr.co2 += co2_rate(s.v, s.accel, cfg_.emission) * cfg_.dt;
    if (k + 1 < scratch_.size() && scratch_[k + 1].lane == s.lane) {
      const auto& leader = scratch_[k + 1];
      if (ttc(s.x, s.v, leader.x, leader.v, cfg_.vehicle_length) < cfg_.safety.ttc_threshold) ++tr.below;
    }
  }
}

void MetricAccumulator::record_lane_change(double t) {
  if (t >= cfg_.warmup - 1e-9) ++lane_changes_;
}

void MetricAccumulator::record_exit(std::int64_t id, double t) {
  if (t < cfg_.warmup - 1e-9) return;
  ++exits_;
  track(id).exited_in_window = true;
}

std::vector<VehicleExposure> MetricAccumulator::exposures() const {
  std::vector<VehicleExposure> out;
  out.reserve(tracks_.size());
  for (const auto& [id, tr] : tracks_) out.push_back({id, tr.steps, tr.below});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

std::optional<EpisodeMetrics> MetricAccumulator::finish() const {
  const auto exp = exposures();
  EpisodeMetrics m;
  double speed_sum = 0.0;
  double co2_sum = 0.0;
  for (const auto& [id, tr] : tracks_) {
    if (tr.steps == 0) continue;
    ++m.vehicles;
    speed_sum += tr.distance / (static_cast<double>(tr.steps) * cfg_.dt);
    // The first sample comes one step after entry, so first_seen - dt is the spawn instant.
    if (tr.exited_in_window && tr.first_seen - cfg_.dt >= cfg_.warmup - 1e-9) {
      ++m.complete_trips;
      co2_sum += tr.co2;
    }
  }
  if (m.vehicles == 0) return std::nullopt;
  m.avg_speed = speed_sum / static_cast<double>(m.vehicles);
  m.co2_per_vehicle = m.complete_trips == 0 ? 0.0 : co2_sum / static_cast<double>(m.complete_trips);
  m.mean_ttc_exposure = mean_ttc_exposure(exp, cfg_.dt);
  std::size_t excluded = 0;
  m.tet = tet(exp, &excluded);
  m.excluded_vehicles = static_cast<std::int64_t>(excluded);
  m.despawned = exits_;
  m.lane_changes = lane_changes_;
  m.lane_changes_per_vehicle = lane_change_count(lane_changes_, exits_);
  m.action_rates = actions_;
  return m;
}

}  // namespace lanereg::metrics
