#pragma once

#include <cstdint>
#include <optional>

#include "lanereg/roadsim/idm.hpp"

namespace lanereg::roadsim {

enum class Direction : std::uint8_t { left, right };
enum class IntentReason : std::uint8_t { keep_right, speed_gain };

struct Intent {
  Direction direction;
  IntentReason reason;
  bool operator==(const Intent&) const = default;
};

/// Lateral manoeuvre in progress. The lane index flips when the lateral offset reaches half
/// a lane width; the manoeuvre ends after lc_duration.
struct LaneChange {
  Direction direction = Direction::left;
  int steps = 0;  // elapsed simulation steps
  int from_lane = 1;
  int to_lane = 1;
  bool switched = false;
  int grid = 0;  // grid where the manoeuvre started
};

enum class StopPhase : std::uint8_t { none, braking, holding, released };

struct Vehicle {
  std::int64_t id = 0;
  int lane = 1;
  double x = 0.0;      // front bumper, m
  double v = 0.0;      // m/s
  double accel = 0.0;  // m/s^2, realised over the last step
  bool is_cv = false;
  IdmParams idm{};
  double effective_time_gap = 1.4;
  std::optional<LaneChange> lc;
  double spawn_time = 0.0;
  double cumulative_co2 = 0.0;           // g
  double cumulative_ttc_exposure = 0.0;  // s below the TTC threshold

  // Lane-change model state.
  std::optional<Intent> candidate;
  double candidate_age = 0.0;  // s the candidate direction has persisted
  double cooldown = 0.0;       // s left before a new intent may form
  int lane_changes = 0;

  // Vehicle-stop event state.
  StopPhase stop_phase = StopPhase::none;
  double stop_decel = 0.0;
  double stop_hold_left = 0.0;

  bool changing() const { return lc.has_value(); }
  /// Second lane occupied while a change is in progress (0 when not changing).
  int other_lane() const {
    if (!lc) return 0;
    return lc->switched ? lc->from_lane : lc->to_lane;
  }
  bool immobilised() const { return stop_phase == StopPhase::braking || stop_phase == StopPhase::holding; }
};

}  // namespace lanereg::roadsim
