#include "lanereg/macroflow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "lanereg/common.hpp"

namespace lanereg::macroflow {
namespace {

constexpr double kVacuum = 1e-12;

struct Cons {
  double rho;
  double y;  // rho * w, w = v + pressure
};

struct Prim {
  double rho;
  double v;
};

struct Flux {
  double mass;
  double y;
};

Flux physical_flux(const Prim& p, const PdeParams& par) {
  const double w = p.v + par.pressure(p.rho);
  return {p.rho * p.v, p.rho * w * p.v};
}

// Characteristic speeds (lambda1 <= lambda2): v + rho V_e'(rho) and v.
std::array<double, 2> wave_speeds(const Prim& p, const PdeParams& par) {
  return {p.v + p.rho * par.curve->slope(p.rho), p.v};
}

Flux hll(const Prim& l, const Prim& r, const PdeParams& par) {
  const auto wl = wave_speeds(l, par);
  const auto wr = wave_speeds(r, par);
  const double sl = std::min(wl[0], wr[0]);
  const double sr = std::max(wl[1], wr[1]);
  const Flux fl = physical_flux(l, par);
  if (sl >= 0.0) return fl;
  const Flux fr = physical_flux(r, par);
  if (sr <= 0.0) return fr;
  const double yl = l.rho * (l.v + par.pressure(l.rho));
  const double yr = r.rho * (r.v + par.pressure(r.rho));
  const double inv = 1.0 / (sr - sl);
  return {(sr * fl.mass - sl * fr.mass + sl * sr * (r.rho - l.rho)) * inv,
          (sr * fl.y - sl * fr.y + sl * sr * (yr - yl)) * inv};
}

Prim to_prim(const Cons& c, const PdeParams& par) {
  if (c.rho <= kVacuum) return {std::max(c.rho, 0.0), par.max_speed()};
  const double v = c.y / c.rho - par.pressure(c.rho);
  return {c.rho, std::clamp(v, 0.0, par.max_speed())};
}

void check_shapes(const MacroField& field, const TransitionRates& rates, const ActionField* actions) {
  const auto n = field.spec.cell_count();
  if (field.density.size() != n || field.speed.size() != n) throw ConfigError("MacroField: array sizes do not match spec");
  if (rates.p_left.size() != n || rates.p_right.size() != n) throw ConfigError("TransitionRates: size mismatch");
  if (actions && actions->cells().size() != n) throw ConfigError("ActionField: size mismatch with the macro grid");
}

// Outflow rates of one cell towards the left and right neighbours, gated and border-zeroed.
std::array<double, 2> outflow_rates(const TransitionRates& rates, const ActionField* actions, int lane, int cell,
                                    int lanes) {
  double left = lane < lanes ? rates.left_rate(lane, cell) : 0.0;
  double right = lane > 1 ? rates.right_rate(lane, cell) : 0.0;
  if (actions) {
    const auto& a = actions->at(lane, cell);
    if (!a.allow_left) left = 0.0;
    if (!a.allow_right) right = 0.0;
  }
  return {left, right};
}

SourceRates source_impl(const MacroField& field, const TransitionRates& rates, const ActionField* actions) {
  check_shapes(field, rates, actions);
  const auto& spec = field.spec;
  SourceRates out{std::vector<double>(spec.cell_count(), 0.0), std::vector<double>(spec.cell_count(), 0.0)};
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    for (int i = 0; i < spec.n_grids; ++i) {
      const auto [kl, kr] = outflow_rates(rates, actions, lane, i, spec.n_lanes);
      const double rho = field.rho(lane, i);
      const double v = field.v(lane, i);
      const double loss = rho * (kl + kr);
      const auto c = spec.cell(lane, i);
      out.mass[c] -= loss;
      out.momentum[c] -= loss * v;
      if (kl > 0.0) {
        const auto d = spec.cell(lane + 1, i);
        out.mass[d] += rho * kl;
        out.momentum[d] += rho * kl * v;
      }
      if (kr > 0.0) {
        const auto d = spec.cell(lane - 1, i);
        out.mass[d] += rho * kr;
        out.momentum[d] += rho * kr * v;
      }
    }
  }
  return out;
}

}  // namespace

double MacroField::total_mass() const {
  double sum = 0.0;
  for (double r : density) sum += r;
  return sum * spec.grid_length;
}

double MacroField::lane_mass(int lane) const {
  double sum = 0.0;
  for (int i = 0; i < spec.n_grids; ++i) sum += rho(lane, i);
  return sum * spec.grid_length;
}

void TransitionRates::validate() const {
  if (!(lc_duration > 0.0)) throw ConfigError("TransitionRates: lc_duration must be positive");
  if (p_left.size() != spec.cell_count() || p_right.size() != spec.cell_count()) {
    throw ConfigError("TransitionRates: size mismatch");
  }
  for (std::size_t c = 0; c < p_left.size(); ++c) {
    if (p_left[c] < 0.0 || p_right[c] < 0.0 || p_left[c] + p_right[c] > 1.0 + 1e-12) {
      throw ConfigError("TransitionRates: fractions must be non-negative and sum to at most 1");
    }
  }
}

PdeParams PdeParams::from_idm(const roadsim::IdmParams& idm) {
  PdeParams p;
  p.curve = std::make_shared<roadsim::EquilibriumCurve>(idm);
  return p;
}

double PdeParams::max_wave_speed() const {
  // |lambda2| <= v_max; |lambda1| <= max(v_max, max rho |V_e'|).
  double worst = 0.0;
  const int n = 4096;
  const double jam = curve->jam_density();
  for (int k = 0; k < n; ++k) {
    const double rho = jam * (k + 0.5) / n;
    worst = std::max(worst, rho * std::abs(curve->slope(rho)));
  }
  return std::max(max_speed(), worst);
}

void PdeParams::validate() const {
  if (!curve) throw ConfigError("PdeParams: missing equilibrium curve");
  if (!(cfl > 0.0) || cfl > 0.9) throw ConfigError("PdeParams: CFL number must lie in (0, 0.9]");
  if (!(relaxation_time > 0.0)) throw ConfigError("PdeParams: relaxation time must be positive");
}

SourceRates source_terms(const MacroField& field, const TransitionRates& rates, const ActionField& actions) {
  return source_impl(field, rates, &actions);
}

SourceRates source_terms(const MacroField& field, const TransitionRates& rates) {
  return source_impl(field, rates, nullptr);
}

CflViolation::CflViolation(double requested, double admissible)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "CFL violation: dt=" << requested << " exceeds the admissible " << admissible;
        return os.str();
      }()),
      requested_dt(requested),
      admissible_dt(admissible) {}

double admissible_dt(const MacroField& field, const PdeParams& params) {
  double lambda = 0.0;
  for (std::size_t c = 0; c < field.density.size(); ++c) {
    const auto w = wave_speeds({field.density[c], field.speed[c]}, params);
    lambda = std::max({lambda, std::abs(w[0]), std::abs(w[1])});
  }
  if (lambda <= 0.0) return std::numeric_limits<double>::infinity();
  return params.cfl * field.spec.grid_length / lambda;
}

MacroField pde_step(const MacroField& field, const TransitionRates& rates, const ActionField& actions, double dt,
                    const PdeParams& params) {
  params.validate();
  check_shapes(field, rates, &actions);
  if (!(dt > 0.0)) throw ConfigError("pde_step: dt must be positive");
  const double limit = admissible_dt(field, params);
  if (dt > limit * (1.0 + 1e-12)) throw CflViolation(dt, limit);

  const auto& spec = field.spec;
  const int n = spec.n_grids;
  const double ratio = dt / spec.grid_length;
  std::vector<Cons> cons(spec.cell_count());

  // Homogeneous transport, lane by lane.
  std::vector<Flux> flux(static_cast<std::size_t>(n) + 1);
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    const auto prim = [&](int i) { return Prim{field.rho(lane, i), field.v(lane, i)}; };
    for (int f = 0; f <= n; ++f) {
      // Face f separates cells f-1 and f.
      if (f == 0 || f == n) {
        switch (params.boundary) {
          case Boundary::closed:
            flux[static_cast<std::size_t>(f)] = {0.0, 0.0};
            continue;
          case Boundary::periodic:
            flux[static_cast<std::size_t>(f)] = hll(prim(n - 1), prim(0), params);
            continue;
          case Boundary::transmissive:
            flux[static_cast<std::size_t>(f)] = f == 0 ? hll(prim(0), prim(0), params) : hll(prim(n - 1), prim(n - 1), params);
            continue;
        }
      }
      flux[static_cast<std::size_t>(f)] = hll(prim(f - 1), prim(f), params);
    }
    for (int i = 0; i < n; ++i) {
      const double rho = field.rho(lane, i);
      const double y = rho * (field.v(lane, i) + params.pressure(rho));
      const auto& fl = flux[static_cast<std::size_t>(i)];
      const auto& fr = flux[static_cast<std::size_t>(i) + 1];
      cons[spec.cell(lane, i)] = {rho - ratio * (fr.mass - fl.mass), y - ratio * (fr.y - fl.y)};
    }
  }

  MacroField mid(spec, 0.0, 0.0);
  for (std::size_t c = 0; c < cons.size(); ++c) {
    const auto p = to_prim(cons[c], params);
    mid.density[c] = p.rho;
    mid.speed[c] = p.v;
  }

  // Lane-change exchange: each cell sheds the fraction 1 - exp(-k dt) of its vehicles,
  // split between the permitted directions; momentum travels with the source lane's speed.
  MacroField out = mid;
  std::vector<double> momentum(spec.cell_count());
  for (std::size_t c = 0; c < momentum.size(); ++c) momentum[c] = mid.density[c] * mid.speed[c];
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    for (int i = 0; i < n; ++i) {
      const auto [kl, kr] = outflow_rates(rates, &actions, lane, i, spec.n_lanes);
      const double k = kl + kr;
      if (k <= 0.0) continue;
      const auto c = spec.cell(lane, i);
      const double shed = mid.density[c] * -std::expm1(-k * dt);
      const double to_left = shed * (kl / k);
      const double to_right = shed - to_left;
      const double v = mid.speed[c];
      out.density[c] -= shed;
      momentum[c] -= shed * v;
      if (to_left > 0.0) {
        const auto d = spec.cell(lane + 1, i);
        out.density[d] += to_left;
        momentum[d] += to_left * v;
      }
      if (to_right > 0.0) {
        const auto d = spec.cell(lane - 1, i);
        out.density[d] += to_right;
        momentum[d] += to_right * v;
      }
    }
  }
  const double relax = -std::expm1(-dt / params.relaxation_time);
  for (std::size_t c = 0; c < out.density.size(); ++c) {
    const double rho = out.density[c] = std::max(out.density[c], 0.0);
    double v = rho > kVacuum ? momentum[c] / rho : params.max_speed();
    v += (params.curve->speed(rho) - v) * relax;
    out.speed[c] = std::clamp(v, 0.0, params.max_speed());
  }
  return out;
}

MacroField advance(const MacroField& field, const TransitionRates& rates, const ActionField& actions,
                   double duration, const PdeParams& params) {
  MacroField cur = field;
  double left = duration;
  while (left > 1e-12) {
    const double dt = std::min(left, admissible_dt(cur, params));
    cur = pde_step(cur, rates, actions, dt, params);
    left -= dt;
  }
  return cur;
}

int locality_radius(double dt, double cell_length, const PdeParams& params) {
  if (!(dt > 0.0) || !(cell_length > 0.0)) throw ConfigError("locality_radius: dt and cell length must be positive");
  const double reach = dt * params.max_wave_speed() / cell_length;
  return std::max(1, static_cast<int>(std::ceil(reach - 1e-12)));
}

TransitionRates calibrate_rates(std::span<const roadsim::TrajectoryRow> trajectory, const GridSpec& spec,
                                double lc_duration) {
  roadsim::IntentTally tally(spec);
  for (const auto& r : trajectory) {
    const auto c = spec.cell(r.lane, spec.grid_of(r.x));
    ++tally.vehicle_steps[c];
    if (r.intent > 0) ++tally.left_intents[c];
    if (r.intent < 0) ++tally.right_intents[c];
  }
  return calibrate_rates(tally, lc_duration);
}

TransitionRates calibrate_rates(const roadsim::IntentTally& tally, double lc_duration) {
  TransitionRates rates(tally.spec, lc_duration, 0.0, 0.0);
  for (std::size_t c = 0; c < tally.vehicle_steps.size(); ++c) {
    const auto n = tally.vehicle_steps[c];
    if (n == 0) continue;
    rates.p_left[c] = static_cast<double>(tally.left_intents[c]) / static_cast<double>(n);
    rates.p_right[c] = static_cast<double>(tally.right_intents[c]) / static_cast<double>(n);
  }
  rates.validate();
  return rates;
}

void write_field_csv(std::ostream& os, double t, const MacroField& field, bool header) {
  if (header) os << "t,lane,cell,rho,v\n";
  for (int lane = 1; lane <= field.spec.n_lanes; ++lane) {
    for (int i = 0; i < field.spec.n_grids; ++i) {
      os << t << ',' << lane << ',' << i << ',' << field.rho(lane, i) << ',' << field.v(lane, i) << '\n';
    }
  }
}

}  // namespace lanereg::macroflow
