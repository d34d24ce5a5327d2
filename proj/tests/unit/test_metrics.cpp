#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "lanereg/common.hpp"
#include "lanereg/env.hpp"
#include "lanereg/metrics.hpp"
#include "lanereg/roadsim/world.hpp"

using namespace lanereg;
using namespace lanereg::metrics;

namespace {

// Time until the follower's front reaches the leader's rear, by solving the intercept directly.
double intercept_time(double xf, double vf, double xl, double vl, double len) {
  const double rear = xl - len;
  if (vf <= vl) return std::numeric_limits<double>::infinity();
  // xf + vf t = rear + vl t
  return (rear - xf) / (vf - vl);
}

struct Recount {
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> steps_below;
};

void brute_force(Recount& rc, const std::vector<VehicleSample>& step, double threshold, double len) {
  for (const auto& s : step) {
    auto& [steps, below] = rc.steps_below[s.id];
    ++steps;
    const VehicleSample* leader = nullptr;
    for (const auto& o : step) {
      if (o.id == s.id || o.lane != s.lane) continue;
      const bool ahead = o.x > s.x || (o.x == s.x && o.id > s.id);
      if (!ahead) continue;
      if (!leader || o.x < leader->x || (o.x == leader->x && o.id < leader->id)) leader = &o;
    }
    if (leader && intercept_time(s.x, s.v, leader->x, leader->v, len) < threshold) ++below;
  }
}

void check_against(const MetricAccumulator& acc, const Recount& rc, double dt) {
  const auto exp = acc.exposures();
  REQUIRE(exp.size() == rc.steps_below.size());
  double exposure = 0.0, tet_sum = 0.0;
  for (const auto& e : exp) {
    const auto& [steps, below] = rc.steps_below.at(e.id);
    CHECK(e.steps == steps);
    CHECK(e.below_steps == below);
    exposure += static_cast<double>(below) * dt;
    tet_sum += static_cast<double>(below) / static_cast<double>(steps);
  }
  const double n = static_cast<double>(exp.size());
  CHECK(mean_ttc_exposure(exp, dt) == exposure / n);
  CHECK(tet(exp) == tet_sum / n);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("time to collision examples") {
    CHECK(ttc(0.0, 20.0, 55.0, 10.0, 5.0) == doctest::Approx(5.0));
    CHECK(std::isinf(ttc(0.0, 15.0, 55.0, 15.0, 5.0)));
    CHECK(std::isinf(ttc(0.0, 10.0, 55.0, 15.0, 5.0)));
    CHECK_THROWS_AS(ttc(0.0, 10.0, 3.0, 10.0, 5.0), InvariantViolation);
  }

  TEST_CASE("time to collision equals the kinematic intercept") {
    Rng rng = make_stream(5, 1);
    for (int i = 0; i < 2000; ++i) {
      const double xf = uniform(rng, 0.0, 500.0), xl = xf + 5.0 + uniform(rng, 0.0, 80.0);
      const double vf = uniform(rng, 0.0, 30.0), vl = uniform(rng, 0.0, 30.0);
      const double a = ttc(xf, vf, xl, vl, 5.0), b = intercept_time(xf, vf, xl, vl, 5.0);
      if (std::isinf(b)) {
        CHECK(std::isinf(a));
      } else {
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("mean exposure examples") {
    const std::vector<VehicleExposure> none{{1, 100, 0}, {2, 50, 0}};
    CHECK(mean_ttc_exposure(none, 0.1) == 0.0);
    const std::vector<VehicleExposure> one{{1, 300, 100}, {2, 300, 0}};
    CHECK(mean_ttc_exposure(one, 0.1) == doctest::Approx(5.0));
  }

  TEST_CASE("time exposed examples") {
    const std::vector<VehicleExposure> none{{1, 100, 0}, {2, 50, 0}};
    CHECK(tet(none) == 0.0);
    const std::vector<VehicleExposure> half{{1, 100, 50}, {2, 40, 20}, {3, 8, 4}};
    CHECK(tet(half) == doctest::Approx(0.5));
    const std::vector<VehicleExposure> zero{{1, 0, 0}, {2, 10, 10}};
    std::size_t excluded = 0;
    CHECK(tet(zero, &excluded) == doctest::Approx(1.0));
    CHECK(excluded == 1);
  }

  TEST_CASE("synthetic episodes match a brute-force recount") {
    Rng rng = make_stream(6, 1);
    MetricConfig cfg;
    cfg.warmup = 0.0;
    for (int episode = 0; episode < 20; ++episode) {
      MetricAccumulator acc(cfg);
      Recount rc;
      const int vehicles = 5 + static_cast<int>(uniform_index(rng, 20));
      for (int k = 1; k <= 60; ++k) {
        std::vector<VehicleSample> step;
        std::map<int, double> next_x;
        for (int id = 0; id < vehicles; ++id) {
          if (bernoulli(rng, 0.1)) continue;  // vehicle off the road this step
          const int lane = 1 + static_cast<int>(uniform_index(rng, 3));
          double& x = next_x.try_emplace(lane, uniform(rng, 0.0, 20.0)).first->second;
          step.push_back({id, lane, x, uniform(rng, 0.0, 30.0), uniform(rng, -2.0, 2.0)});
          x += cfg.vehicle_length + uniform(rng, 0.0, 40.0);
        }
        acc.observe_step(k * cfg.dt, step);
        brute_force(rc, step, cfg.safety.ttc_threshold, cfg.vehicle_length);
      }
      check_against(acc, rc, cfg.dt);
      const auto m = acc.finish();
      REQUIRE(m);
      CHECK(m->tet >= 0.0);
      CHECK(m->tet <= 1.0);
    }
  }

  TEST_CASE("stop-wave episode matches a brute-force recount") {
    roadsim::RoadConfig road;
    road.lanes = 2;
    roadsim::ScenarioEvent stop;
    stop.kind = roadsim::EventKind::vehicle_stop;
    stop.lane = 1;
    stop.x_range = {600.0, 700.0};
    stop.t_range = {80.0, 200.0};
    stop.stop_hold = 40.0;
    roadsim::DemandConfig d;
    d.per_lane_inflow = 1495.0;
    d.seed = 3;
    roadsim::World w(road, {}, {}, d, {stop});
    MetricConfig cfg;
    cfg.warmup = 0.0;
    MetricAccumulator acc(cfg);
    Recount rc;
    const auto allow = ActionField::allow_all(w.grid());
    for (int k = 0; k < 3000; ++k) {
      w.step(allow);
      const auto samples = w.samples();
      acc.observe_step(w.time(), samples);
      brute_force(rc, samples, cfg.safety.ttc_threshold, cfg.vehicle_length);
    }
    check_against(acc, rc, cfg.dt);
    std::int64_t below = 0;
    for (const auto& e : acc.exposures()) below += e.below_steps;
    CHECK(below > 0);
  }

  TEST_CASE("emission surrogate") {
    const EmissionParams p;
    CHECK(co2_rate(0.0, 0.0, p) == doctest::Approx(p.idle_rate));
    // The power-driven part above idle grows faster than linearly through the drag term.
    for (double v : {5.0, 10.0, 20.0}) CHECK(co2_rate(2.0 * v, 0.0, p) - p.idle_rate > 2.0 * (co2_rate(v, 0.0, p) - p.idle_rate));
    double prev = 0.0;
    for (double v = 0.0; v < 35.0; v += 0.5) {
      const double r = co2_rate(v, 0.3, p);
      CHECK(r >= prev);
      prev = r;
    }
  }

  TEST_CASE("steady cruise emission equals the integrated rate") {
    const EmissionParams p;
    const double v = 22.93;
    MetricConfig cfg;
    cfg.warmup = 0.0;
    MetricAccumulator acc(cfg);
    double x = 0.0;
    int k = 1;
    for (; x + v * cfg.dt <= 1000.0; ++k) {
      x += v * cfg.dt;
      const VehicleSample s{1, 1, x, v, 0.0};
      acc.observe_step(k * cfg.dt, std::span<const VehicleSample>(&s, 1));
    }
    acc.record_exit(1, k * cfg.dt);
    // Trapezoid rule on the power model over the trip, written out independently.
    const double power = p.mass * v * kGravity * p.rolling_coefficient + 0.5 * p.air_density * p.drag_area * v * v * v;
    const double rate = p.idle_rate + p.grams_per_joule * power;
    const int n = 2000;
    const double duration = (k - 1) * cfg.dt, h = duration / n;
    double integral = 0.0;
    for (int i = 0; i < n; ++i) integral += 0.5 * h * (rate + rate);
    const auto m = acc.finish();
    REQUIRE(m);
    CHECK(m->complete_trips == 1);
    CHECK(m->co2_per_vehicle == doctest::Approx(integral).epsilon(1e-9));
    CHECK(m->avg_speed == doctest::Approx(v));
  }

  TEST_CASE("action distribution") {
    const GridSpec spec{100.0, 10, 5};
    SUBCASE("all allowed") {
      const auto t = action_distribution(std::vector<ActionField>(7, ActionField::allow_all(spec)));
      for (const auto& lane : t) {
        CHECK(lane.any_rate() == 1.0);
        CHECK(lane.left_only_rate() == 0.0);
        CHECK(lane.right_only_rate() == 0.0);
      }
    }
    SUBCASE("all denied") {
      const auto t = action_distribution(std::vector<ActionField>(7, ActionField::deny_all(spec)));
      for (const auto& lane : t) CHECK(lane.any_rate() == 0.0);
    }
    SUBCASE("uniform random actions: identities and the three-quarter share") {
      Rng rng = make_stream(12, 1);
      std::vector<ActionField> log;
      for (int s = 0; s < 2000; ++s) {
        ActionField a(spec, GridAction{});
        for (auto& c : a.cells()) c = GridAction::from_index(static_cast<int>(uniform_index(rng, 4)));
        log.push_back(a);
      }
      const auto t = action_distribution(log);
      REQUIRE(t.size() == 5);
      for (const auto& lane : t) {
        CHECK(lane.any_allowed == lane.left_allowed + lane.right_allowed - lane.both_allowed);
        CHECK(lane.left_allowed == lane.any_allowed - lane.right_only);
        CHECK(lane.right_allowed == lane.any_allowed - lane.left_only);
        const double n = static_cast<double>(lane.samples);
        CHECK(std::abs(lane.any_rate() - 0.75) < 3.0 * std::sqrt(0.75 * 0.25 / n));
      }
    }
  }

  TEST_CASE("lane changes per vehicle") {
    CHECK(lane_change_count(3, 2) == doctest::Approx(1.5));
    CHECK(lane_change_count(0, 0) == 0.0);
  }

  TEST_CASE("baseline lane changes fall as demand congests") {
    double low = 0.0, jam = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
      for (auto level : {roadsim::DemandLevel::low, roadsim::DemandLevel::congested_high}) {
        env::ScenarioConfig sc;
        sc.demand = level;
        env::RegulationEnv e(sc);
        e.reset(seed);
        const auto allow = ActionField::allow_all(e.grid());
        while (!e.done()) e.step(allow);
        (level == roadsim::DemandLevel::low ? low : jam) += e.metrics()->lane_changes_per_vehicle;
      }
    }
    CHECK(low > jam);
  }

  TEST_CASE("nothing inside the metric window yields no metrics") {
    MetricConfig cfg;
    MetricAccumulator acc(cfg);
    const VehicleSample s{1, 1, 10.0, 20.0, 0.0};
    for (int k = 1; k < 1000; ++k) acc.observe_step(k * 0.1, std::span<const VehicleSample>(&s, 1));
    CHECK_FALSE(acc.finish());
  }
}
