#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lanereg/harness/validate.hpp"
#include "lanereg/macroflow.hpp"
#include "lanereg/roadsim/world.hpp"

using namespace lanereg;
using namespace lanereg::macroflow;

namespace {

const GridSpec kSpec{100.0, 10, 5};

PdeParams params(Boundary b) {
  auto p = PdeParams::from_idm({});
  p.boundary = b;
  return p;
}

MacroField random_field(Rng& rng, const PdeParams& p) {
  MacroField f(kSpec, 0.0, 0.0);
  for (std::size_t c = 0; c < kSpec.cell_count(); ++c) {
    f.density[c] = uniform(rng, 0.0, 0.1);
    f.speed[c] = uniform(rng, 0.0, p.max_speed());
  }
  return f;
}

}  // namespace

TEST_SUITE("macroflow") {
  TEST_CASE("denying every change removes every source") {
    Rng rng = make_stream(1, 1);
    const auto f = random_field(rng, params(Boundary::closed));
    const TransitionRates rates(kSpec, 2.0, 0.3, 0.2);
    const auto s = source_terms(f, rates, ActionField::deny_all(kSpec));
    for (double m : s.mass) CHECK(m == 0.0);
    for (double m : s.momentum) CHECK(m == 0.0);
  }

  TEST_CASE("granting every change reproduces the unregulated exchange") {
    Rng rng = make_stream(2, 1);
    const auto f = random_field(rng, params(Boundary::closed));
    TransitionRates rates(kSpec, 2.0, 0.0, 0.0);
    for (std::size_t c = 0; c < kSpec.cell_count(); ++c) {
      rates.p_left[c] = uniform(rng, 0.0, 0.5);
      rates.p_right[c] = uniform(rng, 0.0, 0.5);
    }
    const auto a = source_terms(f, rates, ActionField::allow_all(kSpec));
    const auto b = source_terms(f, rates);
    CHECK(a.mass == b.mass);
    CHECK(a.momentum == b.momentum);
  }

  TEST_CASE("uniform field with symmetric rates has no net exchange in interior lanes") {
    const MacroField f(kSpec, 0.03, 15.0);
    const TransitionRates rates(kSpec, 2.0, 0.2, 0.2);
    const auto s = source_terms(f, rates, ActionField::allow_all(kSpec));
    for (int lane = 2; lane <= 4; ++lane) {
      for (int g = 0; g < 10; ++g) CHECK(std::abs(s.mass[kSpec.cell(lane, g)]) < 1e-15);
    }
    // Hand balance for an edge lane: loss of (pl + pr)/tau where only the left neighbour exists.
    double lane_sum = 0.0;
    for (int lane = 1; lane <= 5; ++lane) lane_sum += s.mass[kSpec.cell(lane, 0)];
    CHECK(std::abs(lane_sum) < 1e-15);
  }

  TEST_CASE("regulated exchange matches a hand-written gain/loss balance") {
    Rng rng = make_stream(3, 1);
    const auto f = random_field(rng, params(Boundary::closed));
    TransitionRates rates(kSpec, 2.0, 0.0, 0.0);
    ActionField act(kSpec, GridAction{});
    for (std::size_t c = 0; c < kSpec.cell_count(); ++c) {
      rates.p_left[c] = uniform(rng, 0.0, 0.5);
      rates.p_right[c] = uniform(rng, 0.0, 0.5);
      act.cells()[c] = GridAction::from_index(static_cast<int>(uniform_index(rng, 4)));
    }
    const auto s = source_terms(f, rates, act);
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 0; g < 10; ++g) {
        double expect = 0.0;
        const auto out = [&](int l, bool left) {
          if (left ? l == 5 : l == 1) return 0.0;
          const auto& a = act.at(l, g);
          if (!(left ? a.allow_left : a.allow_right)) return 0.0;
          return f.rho(l, g) * (left ? rates.left_rate(l, g) : rates.right_rate(l, g));
        };
        expect -= out(lane, true) + out(lane, false);
        if (lane > 1) expect += out(lane - 1, true);
        if (lane < 5) expect += out(lane + 1, false);
        CHECK(s.mass[kSpec.cell(lane, g)] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("an empty road stays empty") {
    const auto p = params(Boundary::transmissive);
    const MacroField f(kSpec, 0.0, p.max_speed());
    const auto out = pde_step(f, TransitionRates(kSpec, 2.0, 0.2, 0.2), ActionField::allow_all(kSpec), 1.0, p);
    for (double r : out.density) CHECK(r == 0.0);
  }

  TEST_CASE("closed road conserves total mass") {
    const auto r = harness::check_pde_mass({}, 10000, 7);
    CAPTURE(r.detail);
    CHECK(r.measured < 1e-12);
  }

  TEST_CASE("Riemann problem reproduces the Rankine-Hugoniot shock speed") {
    const auto r = harness::check_riemann_shock({}, 200);
    CAPTURE(r.detail);
    CHECK(r.measured < 0.05);
  }

  TEST_CASE("disturbances travel no further than the locality radius") {
    const auto r = harness::check_pde_locality({}, 5);
    CAPTURE(r.detail);
    CHECK(r.passed);
  }

  TEST_CASE("locality radius arithmetic") {
    auto p = params(Boundary::closed);
    CHECK(locality_radius(1e-9, 100.0, p) == 1);
    // 4 s at the IDM desired speed covers 98.36 m, under one 100 m cell.
    CHECK(std::ceil(4.0 * 24.59 / 100.0) == 1.0);
    const double w = p.max_wave_speed();
    CHECK(locality_radius(4.0, 100.0, p) == static_cast<int>(std::ceil(4.0 * w / 100.0)));
    const int r1 = locality_radius(20.0, 50.0, p);
    const int r2 = locality_radius(20.0, 100.0, p);
    CHECK(r2 == static_cast<int>(std::ceil(20.0 * w / 100.0)));
    CHECK(r1 == static_cast<int>(std::ceil(20.0 * w / 50.0)));
    CHECK(std::abs(r1 - 2 * r2) <= 1);
  }

  TEST_CASE("steps beyond the CFL bound are refused") {
    const auto p = params(Boundary::closed);
    Rng rng = make_stream(4, 1);
    const auto f = random_field(rng, p);
    const double ok = admissible_dt(f, p);
    CHECK_NOTHROW(pde_step(f, TransitionRates(kSpec, 2.0, 0.1, 0.1), ActionField::allow_all(kSpec), ok, p));
    try {
      (void)pde_step(f, TransitionRates(kSpec, 2.0, 0.1, 0.1), ActionField::allow_all(kSpec), 2.0 * ok, p);
      FAIL("expected a CFL violation");
    } catch (const CflViolation& e) {
      CHECK(e.admissible_dt == doctest::Approx(ok));
    }
  }

  TEST_CASE("rates are fractions over the manoeuvre duration") {
    const TransitionRates rates(kSpec, 2.0, 0.5, 0.5);
    CHECK(rates.left_rate(2, 3) == doctest::Approx(0.25));
    CHECK_THROWS_AS(TransitionRates(kSpec, 2.0, 0.7, 0.7).validate(), ConfigError);
  }

  TEST_CASE("calibration from logs") {
    SUBCASE("no intents gives zero rates") {
      roadsim::IntentTally tally(kSpec);
      for (auto& n : tally.vehicle_steps) n = 50;
      const auto r = calibrate_rates(tally, 2.0);
      for (double p : r.p_left) CHECK(p == 0.0);
      for (double p : r.p_right) CHECK(p == 0.0);
    }
    SUBCASE("half the samples wanting left gives 0.25 per second") {
      std::vector<roadsim::TrajectoryRow> rows;
      for (int k = 0; k < 10; ++k) rows.push_back({k * 0.1, 1, 2, 350.0, 20.0, 0.0, true, 0, k % 2 ? 1 : 0});
      const auto r = calibrate_rates(rows, kSpec, 2.0);
      CHECK(r.p_left[kSpec.cell(2, 3)] == doctest::Approx(0.5));
      CHECK(r.left_rate(2, 3) == doctest::Approx(0.25));
    }
    SUBCASE("low-demand simulation never asks the rightmost lane to go further right") {
      roadsim::World w({}, {}, {}, roadsim::demand_preset(roadsim::DemandLevel::low, 0.0, 3));
      w.enable_intent_tally(true);
      const auto allow = ActionField::allow_all(w.grid());
      for (int k = 0; k < 6000; ++k) w.step(allow);
      const auto r = calibrate_rates(*w.intent_tally(), 2.0);
      double inner_right = 0.0;
      for (int g = 0; g < 10; ++g) {
        CHECK(r.p_right[kSpec.cell(1, g)] == 0.0);
        inner_right += r.p_right[kSpec.cell(2, g)];
      }
      CHECK(inner_right > 0.0);
    }
  }

  TEST_CASE("field export has one row per cell") {
    std::ostringstream os;
    write_field_csv(os, 4.0, MacroField(kSpec, 0.01, 20.0), true);
    std::istringstream is(os.str());
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 1 + static_cast<int>(kSpec.cell_count()));
  }
}
