#include <doctest.h>

#include <cmath>

#include "lanereg/common.hpp"
#include "lanereg/gridstate.hpp"

using namespace lanereg;

namespace {

const GridSpec kSpec{100.0, 10, 5};
constexpr double kFree = 24.59;

}  // namespace

TEST_SUITE("gridstate") {
  TEST_CASE("two vehicles in one grid") {
    const std::vector<PointVehicle> vs{{2, 120.0, 20.0, true}, {2, 180.0, 24.0, false}};
    const auto f = aggregate(vs, kSpec, kFree);
    const auto& s = f.at(2, 1);
    CHECK(s.density == doctest::Approx(0.02));
    CHECK(s.speed == doctest::Approx(22.0));
    CHECK(s.cv_density == doctest::Approx(0.01));
    CHECK(s.cv_speed == doctest::Approx(20.0));
  }

  TEST_CASE("empty grid reports zero density and free speed") {
    const auto f = aggregate(std::vector<PointVehicle>{}, kSpec, kFree);
    for (const auto& s : f.cells()) {
      CHECK(s.density == 0.0);
      CHECK(s.cv_density == 0.0);
      CHECK(s.speed == kFree);
      CHECK(s.cv_speed == kFree);
    }
  }

  TEST_CASE("grid counts add up to the lane populations") {
    Rng rng = make_stream(7, 1);
    std::vector<PointVehicle> vs;
    std::vector<int> per_lane(6, 0);
    for (int i = 0; i < 500; ++i) {
      const int lane = 1 + static_cast<int>(uniform_index(rng, 5));
      vs.push_back({lane, uniform(rng, 0.0, 1000.0), uniform(rng, 0.0, 30.0), bernoulli(rng, 0.4)});
      ++per_lane[lane];
    }
    vs.push_back({3, 1000.0, 10.0, false});
    ++per_lane[3];
    const auto f = aggregate(vs, kSpec, kFree);
    double total = 0.0;
    for (int lane = 1; lane <= 5; ++lane) {
      double mass = 0.0;
      for (int g = 0; g < kSpec.n_grids; ++g) {
        mass += f.at(lane, g).density * kSpec.grid_length;
        CHECK(f.at(lane, g).cv_density <= f.at(lane, g).density);
      }
      CHECK(std::llround(mass) == per_lane[lane]);
      CHECK(std::abs(mass - per_lane[lane]) < 1e-9);
      total += mass;
    }
    CHECK(std::abs(total - 501.0) < 1e-9);
  }

  TEST_CASE("full penetration makes CV and total features coincide") {
    Rng rng = make_stream(8, 1);
    std::vector<PointVehicle> vs;
    for (int i = 0; i < 200; ++i) vs.push_back({1 + static_cast<int>(uniform_index(rng, 5)), uniform(rng, 0.0, 1000.0), uniform(rng, 0.0, 30.0), true});
    const auto f = aggregate(vs, kSpec, kFree);
    for (const auto& s : f.cells()) {
      CHECK(s.cv_density == s.density);
      CHECK(s.cv_speed == s.speed);
    }
  }

  TEST_CASE("uniform field, interior agent: equal features and an empty mask") {
    std::vector<PointVehicle> vs;
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 0; g < 10; ++g) vs.push_back({lane, g * 100.0 + 50.0, 12.0, true});
    }
    const auto obs = observe(aggregate(vs, kSpec, kFree), 3, 5);
    for (int c = 0; c < kWindowCells; ++c) {
      CHECK(obs[static_cast<std::size_t>(c * 4 + 0)] == doctest::Approx(0.01 / 0.133));
      CHECK(obs[static_cast<std::size_t>(c * 4 + 1)] == doctest::Approx(0.01 / 0.133));
      CHECK(obs[static_cast<std::size_t>(c * 4 + 2)] == doctest::Approx(12.0 / 24.59));
      CHECK(obs[static_cast<std::size_t>(kWindowCells * 4 + c)] == 0.0f);
    }
  }

  TEST_CASE("rightmost lane masks the five cells of the missing lane") {
    const auto obs = observe(aggregate(std::vector<PointVehicle>{}, kSpec, kFree), 1, 5);
    int masked = 0;
    for (int c = 0; c < kWindowCells; ++c) {
      const float m = obs[static_cast<std::size_t>(kWindowCells * 4 + c)];
      masked += m == 1.0f;
      if (c < kObservedGrids) {
        CHECK(m == 1.0f);
        for (int f = 0; f < 4; ++f) CHECK(obs[static_cast<std::size_t>(c * 4 + f)] == 0.0f);
      }
    }
    CHECK(masked == 5);
  }

  TEST_CASE("corner agent masks lane and grid overhangs") {
    const auto obs = observe(aggregate(std::vector<PointVehicle>{}, kSpec, kFree), 5, 0);
    int masked = 0;
    for (int c = 0; c < kWindowCells; ++c) masked += obs[static_cast<std::size_t>(kWindowCells * 4 + c)] == 1.0f;
    // Lane 6 (5 cells) plus grids -2 and -1 of lanes 4 and 5.
    CHECK(masked == 9);
  }

  TEST_CASE("observations stay inside the unit interval") {
    Rng rng = make_stream(9, 1);
    std::vector<PointVehicle> vs;
    for (int i = 0; i < 400; ++i) vs.push_back({1 + static_cast<int>(uniform_index(rng, 5)), uniform(rng, 0.0, 1000.0), uniform(rng, 0.0, 24.59), bernoulli(rng, 0.5)});
    const auto f = aggregate(vs, kSpec, kFree);
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 0; g < 10; ++g) {
        for (float x : observe(f, lane, g)) {
          CHECK(x >= 0.0f);
          CHECK(x <= 1.0f);
        }
      }
    }
  }

  TEST_CASE("shifting every vehicle one grid downstream shifts the observations") {
    Rng rng = make_stream(10, 1);
    std::vector<PointVehicle> vs, shifted;
    for (int i = 0; i < 300; ++i) {
      const PointVehicle v{1 + static_cast<int>(uniform_index(rng, 5)), uniform(rng, 0.0, 800.0), uniform(rng, 0.0, 24.0), bernoulli(rng, 0.5)};
      vs.push_back(v);
      shifted.push_back({v.lane, v.x + 100.0, v.v, v.is_cv});
    }
    const auto a = aggregate(vs, kSpec, kFree);
    const auto b = aggregate(shifted, kSpec, kFree);
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 2; g <= 6; ++g) CHECK(observe(a, lane, g) == observe(b, lane, g + 1));
    }
  }

  TEST_CASE("window cut from normalised features equals the direct observation") {
    Rng rng = make_stream(11, 1);
    std::vector<PointVehicle> vs;
    for (int i = 0; i < 250; ++i) vs.push_back({1 + static_cast<int>(uniform_index(rng, 5)), uniform(rng, 0.0, 1000.0), uniform(rng, 0.0, 24.0), bernoulli(rng, 0.5)});
    const auto f = aggregate(vs, kSpec, kFree);
    std::vector<float> features(kSpec.cell_count() * 4);
    normalize_field(f, {}, features.data());
    for (int lane = 1; lane <= 5; ++lane) {
      for (int g = 0; g < 10; ++g) {
        Observation cut{};
        observe_window(features.data(), kSpec, lane, g, cut.data());
        CHECK(cut == observe(f, lane, g));
      }
    }
  }

  TEST_CASE("grid spec must tile the road") {
    CHECK(GridSpec::for_road(1000.0, 5).n_grids == 10);
    CHECK_THROWS_AS(GridSpec::for_road(1050.0, 5), ConfigError);
  }
}
