#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "lanereg/env.hpp"

using namespace lanereg;
using namespace lanereg::env;

namespace {

const GridSpec kSpec{100.0, 10, 5};

struct State {
  std::int64_t id;
  int lane;
  double x, v;
  bool operator==(const State&) const = default;
};

std::vector<State> snapshot(const roadsim::World& w) {
  std::vector<State> s;
  for (const auto& v : w.vehicles()) s.push_back({v.id, v.lane, v.x, v.v});
  return s;
}

ScenarioConfig scenario(double cv_rate, roadsim::DemandLevel demand = roadsim::DemandLevel::high) {
  ScenarioConfig sc;
  sc.cv_rate = cv_rate;
  sc.demand = demand;
  return sc;
}

EnvConfig short_episode(int steps) {
  EnvConfig c;
  c.episode_length = steps;
  return c;
}

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("joint action encoding") {
    for (int i = 0; i < kJointActions; ++i) CHECK(GridAction::from_index(i).index() == i);
    CHECK(GridAction{true, false}.index() == 2);
    CHECK(GridAction{false, true}.index() == 1);
  }

  TEST_CASE("reward neighbourhood sizes") {
    CHECK(neighborhood(kSpec, 3, 5).size() == 15);
    CHECK(neighborhood(kSpec, 1, 0).size() == 6);
    CHECK(neighborhood(kSpec, 5, 9).size() == 6);
    CHECK(neighborhood(kSpec, 1, 5).size() == 10);
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 0; g < 10; ++g) {
        for (auto [l, k] : neighborhood(kSpec, lane, g)) {
          CHECK(std::abs(l - lane) <= 1);
          CHECK(std::abs(k - g) * 100.0 <= 200.0);
        }
      }
    }
  }

  TEST_CASE("reward examples") {
    const RewardWeights w;
    GridField f(kSpec);
    for (auto& c : f.cells()) c = {0.0, 0.0, w.max_speed, w.max_speed};
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 0; g < 10; ++g) {
        const auto r = reward(f, lane, g, w);
        CHECK(r.speed == doctest::Approx(1.0));
        CHECK(r.density == doctest::Approx(1.0));
        CHECK(r.total == doctest::Approx(1.0));
      }
    }
    for (auto& c : f.cells()) c = {w.max_density, w.max_density, 0.0, 0.0};
    CHECK(reward(f, 2, 4, w).total == doctest::Approx(0.0));
    for (auto& c : f.cells()) c = {0.5 * w.max_density, 0.0, 0.5 * w.max_speed, w.max_speed};
    CHECK(reward(f, 1, 0, w).total == doctest::Approx(0.5));
  }

  TEST_CASE("clipped neighbourhoods average over the cells that exist") {
    const RewardWeights w;
    GridField f(kSpec);
    Rng rng = make_stream(3, 1);
    for (auto& c : f.cells()) c = {uniform(rng, 0.0, 0.1), 0.0, uniform(rng, 0.0, 24.0), 0.0};
    for (auto [lane, g] : std::vector<std::pair<int, int>>{{1, 0}, {5, 9}, {3, 1}, {3, 5}}) {
      double s1 = 0.0, s2 = 0.0;
      int n = 0;
      for (int l = lane - 1; l <= lane + 1; ++l) {
        for (int k = g - 2; k <= g + 2; ++k) {
          if (l < 1 || l > 5 || k < 0 || k > 9) continue;
          s1 += f.at(l, k).speed / w.max_speed;
          s2 += 1.0 - f.at(l, k).density / w.max_density;
          ++n;
        }
      }
      const auto r = reward(f, lane, g, w);
      CHECK(r.speed == doctest::Approx(s1 / n));
      CHECK(r.density == doctest::Approx(s2 / n));
      CHECK(r.total == doctest::Approx(0.5 * s1 / n + 0.5 * s2 / n));
    }
  }

  TEST_CASE("rewards ignore vehicles outside the neighbourhood") {
    const RewardWeights w;
    Rng rng = make_stream(4, 1);
    std::vector<PointVehicle> vs;
    for (int i = 0; i < 300; ++i) vs.push_back({1 + static_cast<int>(uniform_index(rng, 5)), uniform(rng, 0.0, 1000.0), uniform(rng, 0.0, 24.0), true});
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 0; g < 10; ++g) {
        const auto nb = neighborhood(kSpec, lane, g);
        const std::set<std::pair<int, int>> inside(nb.begin(), nb.end());
        auto moved = vs;
        for (auto& v : moved) {
          if (!inside.count({v.lane, kSpec.grid_of(v.x)})) v.v = uniform(rng, 0.0, 24.0);
        }
        CHECK(reward(aggregate(vs, kSpec, w.max_speed), lane, g, w).total ==
              reward(aggregate(moved, kSpec, w.max_speed), lane, g, w).total);
      }
    }
  }

  TEST_CASE("timing configuration") {
    EnvConfig c;
    CHECK(c.sim_steps_per_env_step(0.1) == 40);
    CHECK(c.reward_samples() == 4);
    c.reward_step = 1.5;
    CHECK_THROWS_AS(c.validate(0.1), ConfigError);
  }

  TEST_CASE("each reward is the mean of the samples taken inside the step") {
    RegulationEnv e(scenario(1.0), short_episode(6));
    e.reset(5);
    std::vector<GridField> samples;
    long sim_steps = 0;
    e.set_observer([&](const roadsim::World& w) {
      if (++sim_steps % 10 == 0) samples.push_back(aggregate_vehicles(w.vehicles(), w.grid(), 24.59));
    });
    const auto allow = ActionField::allow_all(e.grid());
    for (int s = 0; s < 6; ++s) {
      samples.clear();
      sim_steps = 0;
      const auto r = e.step(allow);
      REQUIRE(samples.size() == 4);
      for (std::size_t c = 0; c < kSpec.cell_count(); ++c) {
        double sum = 0.0;
        for (const auto& f : samples) sum += reward_all(f, e.weights())[c].total;
        CHECK(r.rewards[c] == doctest::Approx(sum / 4.0).epsilon(1e-6));
        CHECK(r.rewards[c] >= 0.0f);
        CHECK(r.rewards[c] <= 1.0f);
      }
    }
  }

  TEST_CASE("an empty road rewards every agent with 1") {
    auto sc = scenario(1.0);
    sc.inflow = 0.0;
    RegulationEnv e(sc, short_episode(20));
    e.reset(1);
    Rng rng = make_stream(1, 2);
    while (!e.done()) {
      ActionField a(e.grid(), GridAction{});
      for (auto& c : a.cells()) c = GridAction::from_index(static_cast<int>(uniform_index(rng, 4)));
      for (float r : e.step(a).rewards) CHECK(r == 1.0f);
    }
  }

  TEST_CASE("all-allow regulation reproduces the unregulated run") {
    RegulationEnv cv(scenario(1.0), short_episode(60));
    RegulationEnv hv(scenario(0.0), short_episode(60));
    cv.reset(8);
    hv.reset(8);
    const auto allow = ActionField::allow_all(cv.grid());
    while (!cv.done()) {
      const auto a = cv.step(allow), b = hv.step(allow);
      REQUIRE(snapshot(cv.world()) == snapshot(hv.world()));
      CHECK(a.rewards == b.rewards);
    }
    CHECK(cv.metrics()->lane_changes_per_vehicle == doctest::Approx(hv.metrics()->lane_changes_per_vehicle));
  }

  TEST_CASE("human drivers ignore the regulation field") {
    RegulationEnv a(scenario(0.0), short_episode(50));
    RegulationEnv b(scenario(0.0), short_episode(50));
    a.reset(9);
    b.reset(9);
    const auto allow = ActionField::allow_all(a.grid()), deny = ActionField::deny_all(a.grid());
    while (!a.done()) {
      a.step(allow);
      b.step(deny);
      REQUIRE(snapshot(a.world()) == snapshot(b.world()));
    }
    CHECK(b.world().stats().gated_intents == 0);
    CHECK(a.world().stats().lane_changes_hv == b.world().stats().lane_changes_hv);
  }

  TEST_CASE("a denied direction sees no connected changes started in that grid") {
    RegulationEnv e(scenario(1.0, roadsim::DemandLevel::low), short_episode(150));
    e.reset(12);
    Rng rng = make_stream(12, 9);
    ActionField current;
    double step_start = 0.0;
    long violations = 0, checked = 0;
    e.set_observer([&](const roadsim::World& w) {
      for (const auto& c : w.step_lane_changes()) {
        // The lane index switches half a manoeuvre after initiation; only changes begun
        // inside the current env step are attributable to its field.
        if (c.t - 0.5 * w.road().lc_duration < step_start + 1e-9 || current.cells().empty()) continue;
        ++checked;
        const auto& a = current.at(c.from_lane, c.grid);
        if (!(c.direction == roadsim::Direction::left ? a.allow_left : a.allow_right)) ++violations;
      }
    });
    while (!e.done()) {
      current = ActionField(e.grid(), GridAction{});
      for (auto& c : current.cells()) c = GridAction::from_index(static_cast<int>(uniform_index(rng, 4)));
      step_start = e.world().time();
      e.step(current);
    }
    CHECK(checked > 0);
    CHECK(violations == 0);
  }

  TEST_CASE("reset is deterministic and starts after the warm-up") {
    RegulationEnv a(scenario(0.5)), b(scenario(0.5));
    a.reset(42);
    b.reset(42);
    CHECK(a.observations() == b.observations());
    CHECK(a.world().time() == doctest::Approx(120.0));
    CHECK(a.observations().size() == static_cast<std::size_t>(a.agents() * kObservationSize));
    a.reset(43);
    CHECK(a.observations() != b.observations());
  }

  TEST_CASE("scenario events drawn at reset") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      RegulationEnv stable(scenario(1.0), short_episode(1));
      stable.reset(seed);
      CHECK(stable.world().events().empty());
      auto sc = scenario(1.0);
      sc.kind = ScenarioKind::lane_degrade;
      RegulationEnv degrade(sc, short_episode(1));
      degrade.reset(seed);
      REQUIRE(degrade.world().events().size() == 1);
      const auto& e = degrade.world().events().front();
      CHECK(e.kind == roadsim::EventKind::lane_degrade);
      CHECK(e.degrade_time_gap >= 4.0);
      CHECK(e.degrade_time_gap <= 10.0);
      sc.kind = ScenarioKind::vehicle_stop;
      RegulationEnv stop(sc, short_episode(1));
      stop.reset(seed);
      REQUIRE(stop.world().events().size() == 1);
      CHECK(stop.world().events().front().kind == roadsim::EventKind::vehicle_stop);
    }
  }

  TEST_CASE("a broken world ends the episode with a fault record") {
    RegulationEnv e(scenario(1.0), short_episode(10));
    e.reset(3);
    const auto& v = e.world().vehicles().front();
    e.world().insert_vehicle(v.lane, v.x - 1.0, v.v, true);
    const auto r = e.step(ActionField::allow_all(e.grid()));
    CHECK(r.done);
    REQUIRE(r.fault);
    CHECK(e.done());
    CHECK_THROWS_AS(e.step(ActionField::allow_all(e.grid())), ConfigError);
  }

  TEST_CASE("episode length and action log") {
    RegulationEnv e(scenario(1.0), short_episode(5));
    e.enable_action_log(true);
    e.reset(2);
    int steps = 0;
    while (!e.done()) {
      ++steps;
      CHECK(e.step(ActionField::allow_all(e.grid())).done == (steps == 5));
    }
    CHECK(steps == 5);
    CHECK(e.action_log().size() == 5 * kSpec.cell_count());
    std::ostringstream os;
    e.write_action_log_csv(os);
    CHECK(os.str().rfind("env_step,lane,grid,action_left,action_right,reward", 0) == 0);
  }

  TEST_CASE("bad configurations are rejected") {
    auto sc = scenario(1.5);
    CHECK_THROWS_AS(RegulationEnv{sc}, ConfigError);
    RewardWeights w;
    w.speed_weight = 0.7;
    CHECK_THROWS_AS(RegulationEnv(scenario(1.0), {}, w), ConfigError);
    CHECK_THROWS_AS(parse_scenario("rush_hour"), ConfigError);
  }
}
