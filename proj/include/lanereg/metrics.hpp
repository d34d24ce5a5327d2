#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "lanereg/actions.hpp"

namespace lanereg::metrics {

struct SafetyConfig {
  double ttc_threshold = 5.0;  // s
};

/// Power-based CO2 surrogate. Absolute grams are indicative only; relative comparisons
/// between paired runs are what the metric is for.
struct EmissionParams {
  double mass = 1500.0;            // kg
  double rolling_coefficient = 0.015;
  double drag_area = 0.66;         // Cd * A, m^2
  double air_density = 1.2;        // kg/m^3
  double idle_rate = 0.5;          // g/s
  double grams_per_joule = 2.88e-4;  // wheel energy to CO2 (25% efficient gasoline engine)
};

inline constexpr double kGravity = 9.81;

/// Time to collision of a follower behind a same-lane leader; +inf unless closing.
/// Throws InvariantViolation when the two vehicles overlap.
double ttc(double follower_x, double follower_v, double leader_x, double leader_v, double vehicle_length);

/// CO2 emission rate in g/s at speed v and acceleration accel.
double co2_rate(double v, double accel, const EmissionParams& p);

/// Per-vehicle tally of simulation steps inside the metric window and steps with TTC < TTC*.
struct VehicleExposure {
  std::int64_t id = 0;
  std::int64_t steps = 0;
  std::int64_t below_steps = 0;
};

/// (1/N) sum_i sum_t 1[TTC_i(t) < TTC*] * dt over vehicles that spent time in the window.
double mean_ttc_exposure(std::span<const VehicleExposure> vehicles, double dt);

/// (1/N) sum_i below_i / steps_i. Vehicles with zero steps are excluded; their count is
/// written to `excluded` when given.
double tet(std::span<const VehicleExposure> vehicles, std::size_t* excluded = nullptr);

/// Per-lane action statistics over (grid, step) samples. Counts are exact; fractions derive from them.
struct LaneActionCounts {
  std::int64_t samples = 0;
  std::int64_t left_allowed = 0;
  std::int64_t right_allowed = 0;
  std::int64_t both_allowed = 0;
  std::int64_t any_allowed = 0;
  std::int64_t left_only = 0;
  std::int64_t right_only = 0;

  double fraction(std::int64_t count) const {
    return samples == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(samples);
  }
  double left_rate() const { return fraction(left_allowed); }
  double right_rate() const { return fraction(right_allowed); }
  double any_rate() const { return fraction(any_allowed); }
  double left_only_rate() const { return fraction(left_only); }
  double right_only_rate() const { return fraction(right_only); }
};

using ActionRateTable = std::vector<LaneActionCounts>;  // index lane - 1

ActionRateTable action_distribution(std::span<const ActionField> log);
/// Accumulates one more action field into an existing table (sized on first use).
void add_to_distribution(ActionRateTable& table, const ActionField& actions);

/// Executed lane changes per vehicle that left the road inside the metric window.
double lane_change_count(std::int64_t executed_changes, std::int64_t vehicles_despawned);

struct EpisodeMetrics {
  double avg_speed = 0.0;  // m/s, mean over vehicles of distance / time in window
  double co2_per_vehicle = 0.0;  // g over complete trips inside the window
  double mean_ttc_exposure = 0.0;  // s
  double tet = 0.0;                // fraction
  double lane_changes_per_vehicle = 0.0;
  std::int64_t vehicles = 0;        // vehicles observed in the window
  std::int64_t complete_trips = 0;  // spawned and despawned inside the window
  std::int64_t despawned = 0;
  std::int64_t lane_changes = 0;
  std::int64_t excluded_vehicles = 0;
  ActionRateTable action_rates;
};

/// One vehicle at one simulation instant, as seen by the metric pipeline.
struct VehicleSample {
  std::int64_t id = 0;
  int lane = 1;
  double x = 0.0;
  double v = 0.0;
  double accel = 0.0;
};

struct MetricConfig {
  SafetyConfig safety{};
  EmissionParams emission{};
  double dt = 0.1;           // simulation step, s
  double warmup = 120.0;     // s excluded from every metric
  double vehicle_length = 5.0;
};

/// Streaming evaluation of an episode. Feed every simulation step (warm-up included so that
/// trip completeness is known); only samples at t >= warmup count.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(const MetricConfig& cfg) : cfg_(cfg) {}

  /// Vehicles on the road after the step that ended at time t.
  void observe_step(double t, std::span<const VehicleSample> vehicles);
  void record_lane_change(double t);
  void record_exit(std::int64_t id, double t);
  void record_actions(const ActionField& actions) { add_to_distribution(actions_, actions); }

  std::vector<VehicleExposure> exposures() const;
  /// Empty when no vehicle was observed inside the metric window.
  std::optional<EpisodeMetrics> finish() const;

 private:
  struct Track {
    bool seen = false;
    double first_seen = 0.0;
    std::int64_t steps = 0;
    std::int64_t below = 0;
    double distance = 0.0;
    double co2 = 0.0;
    bool exited_in_window = false;
  };
  Track& track(std::int64_t id);

  MetricConfig cfg_;
  std::unordered_map<std::int64_t, Track> tracks_;
  std::vector<VehicleSample> scratch_;
  std::int64_t lane_changes_ = 0;
  std::int64_t exits_ = 0;
  ActionRateTable actions_;
};

}  // namespace lanereg::metrics
