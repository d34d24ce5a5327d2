#include "lanereg/roadsim/idm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lanereg/common.hpp"

namespace lanereg::roadsim {

void IdmParams::validate() const {
  const double fields[] = {vehicle_length, desired_speed, time_gap, min_gap,
                           accel_exponent, max_accel,     comfort_decel};
  for (double f : fields) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("IdmParams: all fields must be finite and > 0");
  }
  if (accel_exponent < 1.0) throw ConfigError("IdmParams: accel_exponent must be >= 1");
}

double idm_acceleration(double v, double gap, double dv, const IdmParams& p, double time_gap) {
  if (!std::isfinite(v) || !std::isfinite(gap) || !std::isfinite(dv) || !std::isfinite(time_gap)) {
    std::ostringstream os;
    os << "idm_acceleration: non-finite input (v=" << v << ", gap=" << gap << ", dv=" << dv
       << ", T=" << time_gap << ")";
    throw std::domain_error(os.str());
  }
  if (!(gap > 0.0)) {
    std::ostringstream os;
    os << "idm_acceleration: gap must be positive, got " << gap;
    throw std::domain_error(os.str());
  }
  const double dynamic = v * time_gap + v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
  const double desired = p.min_gap + std::max(0.0, dynamic);
  const double ratio = desired / gap;
  const double free_term = std::pow(std::max(v, 0.0) / p.desired_speed, p.accel_exponent);
  return p.max_accel * (1.0 - free_term - ratio * ratio);
}

double equilibrium_gap(double v, const IdmParams& p, double time_gap) {
  if (v < 0.0 || v >= p.desired_speed) {
    throw std::domain_error("equilibrium_gap: requires 0 <= v < v0");
  }
  const double denom = std::sqrt(1.0 - std::pow(v / p.desired_speed, p.accel_exponent));
  return (p.min_gap + v * time_gap) / denom;
}

double equilibrium_speed_for_gap(double gap, const IdmParams& p, double time_gap) {
  if (gap <= p.min_gap) return 0.0;
  double lo = 0.0;
  double hi = p.desired_speed;
  for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (equilibrium_gap(mid, p, time_gap) < gap) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

EquilibriumPoint equilibrium_state(double v, const IdmParams& p) {
  if (v < 0.0) throw std::domain_error("equilibrium_state: negative speed");
  if (v >= p.desired_speed) {
    throw std::domain_error("equilibrium_state: v >= v0 is the free-flow limit (gap diverges)");
  }
  const double density = 1.0 / (equilibrium_gap(v, p) + p.vehicle_length);
  return {density, 3600.0 * density * v};
}

double equilibrium_speed_for_density(double rho, const IdmParams& p) {
  if (rho <= 0.0) return p.desired_speed;
  if (rho >= p.jam_density()) return 0.0;
  // Density decreases strictly in v.
  double lo = 0.0;
  double hi = p.desired_speed;
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (equilibrium_state(mid, p).density > rho) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

EquilibriumCurve::EquilibriumCurve(const IdmParams& p, int samples)
    : rho_jam_(p.jam_density()), v0_(p.desired_speed), step_(p.jam_density() / samples) {
  speeds_.resize(static_cast<std::size_t>(samples) + 1);
  for (int k = 0; k <= samples; ++k) {
    speeds_[static_cast<std::size_t>(k)] = equilibrium_speed_for_density(k * step_, p);
  }
  speeds_.front() = v0_;
  speeds_.back() = 0.0;
}

double EquilibriumCurve::speed(double rho) const {
  if (rho <= 0.0) return v0_;
  if (rho >= rho_jam_) return 0.0;
  const double pos = rho / step_;
  const auto k = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(k);
  return speeds_[k] + frac * (speeds_[k + 1] - speeds_[k]);
}

double EquilibriumCurve::slope(double rho) const {
  if (rho < 0.0 || rho >= rho_jam_) return 0.0;
  const auto k = std::min(static_cast<std::size_t>(rho / step_), speeds_.size() - 2);
  return (speeds_[k + 1] - speeds_[k]) / step_;
}

}  // namespace lanereg::roadsim
