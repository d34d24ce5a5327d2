#pragma once

#include <vector>

namespace lanereg::roadsim {

/// Intelligent driver model parameters. Defaults are the freeway calibration used
/// throughout the toolkit (5 m cars, 24.59 m/s desired speed).
struct IdmParams {
  double vehicle_length = 5.0;   // m
  double desired_speed = 24.59;  // m/s
  double time_gap = 1.4;         // s
  double min_gap = 2.5;          // m
  double accel_exponent = 4.0;
  double max_accel = 0.73;     // m/s^2
  double comfort_decel = 1.67;  // m/s^2

  /// Throws ConfigError unless every field is positive and the exponent is >= 1.
  void validate() const;
  /// Jam density 1 / (s0 + L_veh), veh/m.
  double jam_density() const { return 1.0 / (min_gap + vehicle_length); }
  bool operator==(const IdmParams&) const = default;
};

/// Gap used when a vehicle has no leader.
inline constexpr double kFreeRoadGap = 1.0e6;

/// IDM acceleration for speed `v`, bumper gap `gap` and closing speed `dv` (v - v_leader).
/// `time_gap` overrides p.time_gap (degraded lanes raise it). The dynamic part of the
/// desired gap is floored at zero, so a faster leader never induces braking.
double idm_acceleration(double v, double gap, double dv, const IdmParams& p, double time_gap);
inline double idm_acceleration(double v, double gap, double dv, const IdmParams& p) {
  return idm_acceleration(v, gap, dv, p, p.time_gap);
}

/// Stationary bumper gap s_e(v) = (s0 + v T) / sqrt(1 - (v/v0)^delta). Requires 0 <= v < v0.
double equilibrium_gap(double v, const IdmParams& p, double time_gap);
inline double equilibrium_gap(double v, const IdmParams& p) { return equilibrium_gap(v, p, p.time_gap); }

/// Inverse of equilibrium_gap: the stationary speed a follower settles at with bumper gap `gap`.
/// Returns 0 for gap <= s0 and approaches v0 as the gap grows.
double equilibrium_speed_for_gap(double gap, const IdmParams& p, double time_gap);
inline double equilibrium_speed_for_gap(double gap, const IdmParams& p) {
  return equilibrium_speed_for_gap(gap, p, p.time_gap);
}

struct EquilibriumPoint {
  double density;  // veh/m
  double flow;     // veh/h
};

/// Point of the IDM fundamental diagram at speed v. Throws std::domain_error for v >= v0
/// (the equilibrium gap diverges) or v < 0.
EquilibriumPoint equilibrium_state(double v, const IdmParams& p);

/// Equilibrium speed V_e(rho) by bisection on the fundamental diagram. rho <= 0 gives v0,
/// rho >= jam density gives 0.
double equilibrium_speed_for_density(double rho, const IdmParams& p);

/// Tabulated V_e(rho) with its derivative, for inner loops that cannot afford bisection.
class EquilibriumCurve {
 public:
  explicit EquilibriumCurve(const IdmParams& p, int samples = 8192);

  double speed(double rho) const;
  /// dV_e/drho (<= 0), piecewise constant between samples.
  double slope(double rho) const;
  double jam_density() const { return rho_jam_; }
  double free_speed() const { return v0_; }
  /// Flow rho * V_e(rho) in veh/s.
  double flow(double rho) const { return rho * speed(rho); }

 private:
  double rho_jam_;
  double v0_;
  double step_;
  std::vector<double> speeds_;
};

}  // namespace lanereg::roadsim
