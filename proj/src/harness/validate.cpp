#include "lanereg/harness/validate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lanereg/gridstate.hpp"
#include "lanereg/macroflow.hpp"
#include "lanereg/qlearner/dqn.hpp"
#include "lanereg/roadsim/world.hpp"

namespace lanereg::harness {

namespace {

std::string describe(std::initializer_list<std::pair<const char*, double>> kv) {
  std::ostringstream os;
  os.precision(6);
  bool first = true;
  for (const auto& [k, v] : kv) {
    os << (first ? "" : " ") << k << '=' << v;
    first = false;
  }
  return os.str();
}

macroflow::MacroField random_field(const GridSpec& spec, const macroflow::PdeParams& params, Rng& rng) {
  macroflow::MacroField f(spec, 0.0, 0.0);
  for (std::size_t c = 0; c < spec.cell_count(); ++c) {
    f.density[c] = uniform(rng, 0.0, 0.1);
    f.speed[c] = uniform(rng, 0.0, params.max_speed());
  }
  return f;
}

ActionField random_actions(const GridSpec& spec, Rng& rng) {
  ActionField a(spec, GridAction{});
  for (auto& c : a.cells()) c = GridAction::from_index(static_cast<int>(uniform_index(rng, 4)));
  return a;
}

}  // namespace

CheckResult check_equilibrium_triples(const roadsim::IdmParams& idm) {
  struct Triple {
    double flow, density, speed;
  };
  constexpr Triple table[] = {{1100.0, 0.013, 22.93}, {1495.0, 0.02, 20.76}, {1410.0, 0.06, 6.53}};
  double worst = 0.0;
  std::ostringstream detail;
  for (const auto& t : table) {
    const auto p = roadsim::equilibrium_state(t.speed, idm);
    const double err = std::max(std::abs(p.density - t.density) / t.density, std::abs(p.flow - t.flow) / t.flow);
    worst = std::max(worst, err);
    detail << "v=" << t.speed << ":rho=" << p.density << ",q=" << p.flow << ' ';
  }
  return {"fundamental_diagram_triples", worst < 0.02, worst, 0.02, detail.str()};
}

CheckResult check_pde_mass(const roadsim::IdmParams& idm, int steps, unsigned seed) {
  Rng rng = make_stream(seed, 101);
  const GridSpec spec{100.0, 10, 5};
  auto params = macroflow::PdeParams::from_idm(idm);
  params.boundary = macroflow::Boundary::closed;
  auto field = random_field(spec, params, rng);
  macroflow::TransitionRates rates(spec, 2.0, 0.0, 0.0);
  for (std::size_t c = 0; c < spec.cell_count(); ++c) {
    rates.p_left[c] = uniform(rng, 0.0, 0.5);
    rates.p_right[c] = uniform(rng, 0.0, 0.5);
  }
  const double m0 = field.total_mass();
  for (int k = 0; k < steps; ++k) {
    const double dt = 0.9 * macroflow::admissible_dt(field, params);
    field = macroflow::pde_step(field, rates, random_actions(spec, rng), dt, params);
  }
  const double drift = std::abs(field.total_mass() - m0) / m0;
  return {"pde_closed_mass_drift", drift < 1e-12, drift, 1e-12,
          describe({{"steps", static_cast<double>(steps)}, {"mass0", m0}})};
}

CheckResult check_pde_locality(const roadsim::IdmParams& idm, unsigned seed) {
  Rng rng = make_stream(seed, 102);
  const GridSpec spec{100.0, 40, 3};
  auto params = macroflow::PdeParams::from_idm(idm);
  params.boundary = macroflow::Boundary::transmissive;
  const auto field = random_field(spec, params, rng);
  macroflow::TransitionRates rates(spec, 2.0, 0.2, 0.2);
  const auto actions = random_actions(spec, rng);
  // Bound valid for every admissible state, so perturbed fields may use the same step.
  const double dt = params.cfl * spec.grid_length / params.max_wave_speed();
  const int radius = macroflow::locality_radius(dt, spec.grid_length, params);
  const auto base = macroflow::pde_step(field, rates, actions, dt, params);
  int violations = 0;
  for (int cell = 0; cell < spec.n_grids; ++cell) {
    auto perturbed = field;
    for (int lane = 1; lane <= spec.n_lanes; ++lane) {
      for (int j = 0; j < spec.n_grids; ++j) {
        if (std::abs(j - cell) <= radius) continue;
        perturbed.rho(lane, j) = uniform(rng, 0.0, 0.1);
        perturbed.v(lane, j) = uniform(rng, 0.0, params.max_speed());
      }
    }
    const auto out = macroflow::pde_step(perturbed, rates, actions, dt, params);
    for (int lane = 1; lane <= spec.n_lanes; ++lane) {
      if (out.rho(lane, cell) != base.rho(lane, cell) || out.v(lane, cell) != base.v(lane, cell)) ++violations;
    }
  }
  return {"pde_locality", violations == 0, static_cast<double>(violations), 0.0,
          describe({{"radius", static_cast<double>(radius)}, {"dt", dt}})};
}

CheckResult check_riemann_shock(const roadsim::IdmParams& idm, int cells) {
  const double length = 4000.0;
  const GridSpec spec{length / cells, cells, 1};
  auto params = macroflow::PdeParams::from_idm(idm);
  params.boundary = macroflow::Boundary::transmissive;
  const double rho_l = 0.02, rho_r = 0.06;
  const auto& curve = *params.curve;
  macroflow::MacroField field(spec, 0.0, 0.0);
  for (int i = 0; i < cells; ++i) {
    const double rho = spec.centre(i) < 0.5 * length ? rho_l : rho_r;
    field.rho(1, i) = rho;
    field.v(1, i) = curve.speed(rho);
  }
  // Both states lie on the equilibrium curve, so w = v + p(rho) = v_max on either side and
  // the discontinuity is an LWR shock of the equilibrium flux.
  const double exact = (curve.flow(rho_r) - curve.flow(rho_l)) / (rho_r - rho_l);
  const double horizon = 0.3 * length / std::max(std::abs(exact), 1.0);
  const macroflow::TransitionRates rates(spec, 2.0, 0.0, 0.0);
  const auto out = macroflow::advance(field, rates, ActionField::allow_all(spec), horizon, params);
  // Shock location from the excess mass over the right state: with rho_l upstream and
  // rho_r downstream, integral(rho - rho_r) dx = x_shock * (rho_l - rho_r).
  const auto location = [&](const macroflow::MacroField& f) {
    double excess = 0.0;
    for (int i = 0; i < cells; ++i) excess += (f.rho(1, i) - rho_r) * spec.grid_length;
    return excess / (rho_l - rho_r);
  };
  const double measured = (location(out) - location(field)) / horizon;
  // Cross-check with the mid-density crossing.
  const double mid = 0.5 * (rho_l + rho_r);
  double crossing = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i + 1 < cells; ++i) {
    const double a = out.rho(1, i), b = out.rho(1, i + 1);
    if ((a - mid) * (b - mid) <= 0.0 && a != b) {
      crossing = spec.centre(i) + (mid - a) / (b - a) * spec.grid_length;
      break;
    }
  }
  const double crossing_speed = (crossing - 0.5 * length) / horizon;
  const double rel = std::max(std::abs(measured - exact), std::abs(crossing_speed - exact)) / std::abs(exact);
  return {"riemann_shock_speed", rel < 0.05, rel, 0.05,
          describe({{"exact", exact}, {"excess_mass", measured}, {"crossing", crossing_speed},
                    {"cells", static_cast<double>(cells)}})};
}

CheckResult check_gradients(int cases, unsigned seed) {
  Rng rng = make_stream(seed, 103);
  using Net = qlearner::Mlp<double>;
  double worst = 0.0;
  for (int k = 0; k < cases; ++k) {
    Net net({kObservationSize, 128, 128, kJointActions});
    net.init(rng);
    for (int l = 0; l < net.layers(); ++l) {
      for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = uniform(rng, -0.1, 0.1);
    }
    const int batch = 4;
    Net::Matrix obs(kObservationSize, batch);
    for (Eigen::Index i = 0; i < obs.size(); ++i) obs.data()[i] = uniform01(rng);
    std::vector<int> actions;
    std::vector<double> targets;
    for (int b = 0; b < batch; ++b) {
      actions.push_back(static_cast<int>(uniform_index(rng, kJointActions)));
      targets.push_back(uniform(rng, -2.0, 2.0));
    }
    qlearner::ParamVector<double> grad;
    qlearner::td_loss(net, obs, actions, targets, &grad);
    double diff2 = 0.0, norm2 = 0.0;
    for (int s = 0; s < 40; ++s) {
      const auto idx = static_cast<std::size_t>(uniform_index(rng, net.parameter_count()));
      const double h = 1e-6, saved = net.parameters()[idx];
      net.parameters()[idx] = saved + h;
      const double up = qlearner::td_loss(net, obs, actions, targets, nullptr);
      net.parameters()[idx] = saved - h;
      const double down = qlearner::td_loss(net, obs, actions, targets, nullptr);
      net.parameters()[idx] = saved;
      const double fd = (up - down) / (2.0 * h);
      diff2 += (fd - grad[idx]) * (fd - grad[idx]);
      norm2 += std::max(fd * fd, grad[idx] * grad[idx]);
    }
    worst = std::max(worst, norm2 > 0.0 ? std::sqrt(diff2 / norm2) : 0.0);
  }
  return {"mlp_gradient_check", worst < 1e-4, worst, 1e-4, describe({{"cases", static_cast<double>(cases)}})};
}

CheckResult check_aggregation(unsigned seed) {
  Rng rng = make_stream(seed, 104);
  const GridSpec spec{100.0, 10, 5};
  const double free_speed = 24.59;
  std::vector<PointVehicle> vehicles;
  for (int i = 0; i < 300; ++i) {
    vehicles.push_back({1 + static_cast<int>(uniform_index(rng, 5)), uniform(rng, 0.0, 1000.0), uniform(rng, 0.0, 30.0),
                        bernoulli(rng, 0.5)});
  }
  const auto field = aggregate(vehicles, spec, free_speed);
  double worst = 0.0;
  for (int lane = 1; lane <= spec.n_lanes; ++lane) {
    for (int g = 0; g < spec.n_grids; ++g) {
      int n = 0, nc = 0;
      double sv = 0.0, svc = 0.0;
      for (const auto& v : vehicles) {
        if (v.lane != lane || v.x < g * 100.0 || v.x >= (g + 1) * 100.0) continue;
        ++n;
        sv += v.v;
        if (v.is_cv) ++nc, svc += v.v;
      }
      const auto& s = field.at(lane, g);
      worst = std::max({worst, std::abs(s.density - n / 100.0), std::abs(s.cv_density - nc / 100.0),
                        std::abs(s.speed - (n ? sv / n : free_speed)), std::abs(s.cv_speed - (nc ? svc / nc : free_speed))});
    }
  }
  return {"grid_aggregation", worst < 1e-12, worst, 1e-12, "300 random vehicles, brute-force recount"};
}

CheckResult check_vehicle_conservation(unsigned seed) {
  const auto demand = roadsim::demand_preset(roadsim::DemandLevel::high, 0.5, seed);
  roadsim::World world({}, {}, {}, demand);
  const auto allow = ActionField::allow_all(world.grid());
  long bad = 0;
  for (int k = 0; k < 6000; ++k) {
    world.step(allow);
    const auto& st = world.stats();
    if (st.spawned - st.despawned != static_cast<std::int64_t>(world.vehicles().size())) ++bad;
  }
  return {"vehicle_conservation", bad == 0, static_cast<double>(bad), 0.0,
          describe({{"steps", 6000.0}, {"spawned", static_cast<double>(world.stats().spawned)}})};
}

std::vector<CheckResult> run_validation(const roadsim::IdmParams& idm) {
  return {check_equilibrium_triples(idm), check_pde_mass(idm, 10000, 1), check_pde_locality(idm, 2),
          check_riemann_shock(idm, 200),  check_gradients(100, 3),       check_aggregation(4),
          check_vehicle_conservation(5)};
}

}  // namespace lanereg::harness
