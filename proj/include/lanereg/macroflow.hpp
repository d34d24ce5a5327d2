#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "lanereg/actions.hpp"
#include "lanereg/grid.hpp"
#include "lanereg/roadsim/idm.hpp"
#include "lanereg/roadsim/world.hpp"

namespace lanereg::macroflow {

/// Per-lane density and speed over the cells of a GridSpec (lane-major storage).
struct MacroField {
  GridSpec spec;
  std::vector<double> density;  // veh/m
  std::vector<double> speed;    // m/s

  MacroField() = default;
  MacroField(const GridSpec& s, double rho, double v)
      : spec(s), density(s.cell_count(), rho), speed(s.cell_count(), v) {}

  double& rho(int lane, int cell) { return density[spec.cell(lane, cell)]; }
  double rho(int lane, int cell) const { return density[spec.cell(lane, cell)]; }
  double& v(int lane, int cell) { return speed[spec.cell(lane, cell)]; }
  double v(int lane, int cell) const { return speed[spec.cell(lane, cell)]; }

  /// Sum of rho * dx over all cells and lanes (vehicles).
  double total_mass() const;
  /// Total mass of one lane.
  double lane_mass(int lane) const;
};

/// Lane-change fractions per cell and the manoeuvre duration. Rates are fraction / duration.
struct TransitionRates {
  GridSpec spec;
  double lc_duration = 2.0;  // s
  std::vector<double> p_left;
  std::vector<double> p_right;

  TransitionRates() = default;
  TransitionRates(const GridSpec& s, double duration, double left, double right)
      : spec(s), lc_duration(duration), p_left(s.cell_count(), left), p_right(s.cell_count(), right) {}

  double left_rate(int lane, int cell) const { return p_left[spec.cell(lane, cell)] / lc_duration; }
  double right_rate(int lane, int cell) const { return p_right[spec.cell(lane, cell)] / lc_duration; }
  /// Throws ConfigError unless 0 <= p and p_left + p_right <= 1 in every cell.
  void validate() const;
};

enum class Boundary { closed, periodic, transmissive };

/// Second-order closure: pressure v_max - V_e(rho), relaxation towards V_e with a fixed time.
struct PdeParams {
  std::shared_ptr<const roadsim::EquilibriumCurve> curve;
  double relaxation_time = 10.0;  // s
  double cfl = 0.9;
  Boundary boundary = Boundary::closed;

  static PdeParams from_idm(const roadsim::IdmParams& idm);
  double max_speed() const { return curve->free_speed(); }
  double pressure(double rho) const { return curve->free_speed() - curve->speed(rho); }
  /// Upper bound of |characteristic speed| over all admissible states.
  double max_wave_speed() const;
  void validate() const;
};

/// Net lane-change exchange per cell: mass in veh/(m s) and momentum in veh/s^2.
struct SourceRates {
  std::vector<double> mass;
  std::vector<double> momentum;
};

/// Gain into a lane uses the neighbour's rate and permission; loss uses the lane's own.
SourceRates source_terms(const MacroField& field, const TransitionRates& rates, const ActionField& actions);
/// Unregulated exchange (every permission granted).
SourceRates source_terms(const MacroField& field, const TransitionRates& rates);

/// Thrown when a step would break the CFL bound; carries the largest admissible step.
class CflViolation : public std::runtime_error {
 public:
  CflViolation(double requested, double admissible);
  double requested_dt;
  double admissible_dt;
};

/// Largest step the CFL bound admits for this field.
double admissible_dt(const MacroField& field, const PdeParams& params);

/// One explicit update: HLL fluxes per lane, then the lane-change exchange and relaxation
/// with permissions held over the whole interval.
MacroField pde_step(const MacroField& field, const TransitionRates& rates, const ActionField& actions, double dt,
                    const PdeParams& params);

/// Integrates over `duration` with CFL-limited substeps under constant permissions.
MacroField advance(const MacroField& field, const TransitionRates& rates, const ActionField& actions,
                   double duration, const PdeParams& params);

/// Cells a disturbance can travel in one step of length dt (at least 1).
int locality_radius(double dt, double cell_length, const PdeParams& params);

/// Per-cell intent fractions estimated from a simulator trajectory log (rows carry intents):
/// p = intent samples / vehicle samples in the cell; empty cells get 0.
TransitionRates calibrate_rates(std::span<const roadsim::TrajectoryRow> trajectory, const GridSpec& spec,
                                double lc_duration);
TransitionRates calibrate_rates(const roadsim::IntentTally& tally, double lc_duration);

/// Appends rows t,lane,cell,rho,v.
void write_field_csv(std::ostream& os, double t, const MacroField& field, bool header);

}  // namespace lanereg::macroflow
