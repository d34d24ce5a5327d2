#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lanereg/roadsim/idm.hpp"

using namespace lanereg::roadsim;

namespace {

// Equilibrium gap straight from the IDM steady state.
double steady_gap(double v, const IdmParams& p) {
  return (p.min_gap + v * p.time_gap) / std::sqrt(1.0 - std::pow(v / p.desired_speed, p.accel_exponent));
}

}  // namespace

TEST_SUITE("idm") {
  TEST_CASE("standstill on an empty road accelerates at the maximum") {
    IdmParams p;
    CHECK(idm_acceleration(0.0, kFreeRoadGap, 0.0, p, p.time_gap) == doctest::Approx(0.73).epsilon(1e-9));
  }

  TEST_CASE("desired speed on an empty road is a fixed point") {
    IdmParams p;
    CHECK(std::abs(idm_acceleration(24.59, kFreeRoadGap, 0.0, p, p.time_gap)) < 1e-9);
  }

  TEST_CASE("net force vanishes at the equilibrium gap") {
    IdmParams p;
    const double gap = steady_gap(20.76, p);
    CHECK(gap == doctest::Approx(45.0).epsilon(0.01));
    CHECK(std::abs(idm_acceleration(20.76, gap, 0.0, p, p.time_gap)) < 1e-3);
  }

  TEST_CASE("acceleration never exceeds the maximum") {
    IdmParams p;
    for (double v = 0.0; v < 30.0; v += 1.5) {
      for (double gap : {1.0, 5.0, 30.0, 200.0, kFreeRoadGap}) {
        for (double dv : {-10.0, 0.0, 10.0}) CHECK(idm_acceleration(v, gap, dv, p, p.time_gap) <= p.max_accel + 1e-12);
      }
    }
  }

  TEST_CASE("non-finite inputs are rejected") {
    IdmParams p;
    CHECK_THROWS(idm_acceleration(NAN, 10.0, 0.0, p, p.time_gap));
    CHECK_THROWS(idm_acceleration(10.0, INFINITY, 0.0, p, p.time_gap));
  }

  TEST_CASE("equilibrium state matches the steady-state formula") {
    IdmParams p;
    for (double v : {1.0, 6.53, 15.0, 20.76, 22.93, 24.0}) {
      const auto e = equilibrium_state(v, p);
      const double rho = 1.0 / (steady_gap(v, p) + p.vehicle_length);
      CHECK(e.density == doctest::Approx(rho).epsilon(1e-9));
      CHECK(e.flow == doctest::Approx(3600.0 * rho * v).epsilon(1e-9));
    }
  }

  TEST_CASE("demand table triples") {
    IdmParams p;
    const auto low = equilibrium_state(22.93, p);
    // Printed to two significant figures; the flow pins the third.
    CHECK(std::round(low.density * 1000.0) / 1000.0 == doctest::Approx(0.013));
    CHECK(low.flow == doctest::Approx(1100.0).epsilon(0.02));
    const auto high = equilibrium_state(20.76, p);
    CHECK(high.density == doctest::Approx(0.02).epsilon(0.02));
    CHECK(high.flow == doctest::Approx(1495.0).epsilon(0.02));
    const auto jam = equilibrium_state(6.53, p);
    CHECK(jam.density == doctest::Approx(0.06).epsilon(0.02));
    CHECK(jam.flow == doctest::Approx(1410.0).epsilon(0.02));
  }

  TEST_CASE("density strictly decreases with speed and the flow curve is concave") {
    IdmParams p;
    double prev_rho = INFINITY;
    std::vector<std::pair<double, double>> pts;
    for (double v = 0.5; v < 24.5; v += 0.5) {
      const auto e = equilibrium_state(v, p);
      CHECK(e.density < prev_rho);
      prev_rho = e.density;
      pts.emplace_back(e.density, e.flow);
    }
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
      const double s1 = (pts[i].second - pts[i - 1].second) / (pts[i].first - pts[i - 1].first);
      const double s2 = (pts[i + 1].second - pts[i].second) / (pts[i + 1].first - pts[i].first);
      CHECK(s2 <= s1 + 1e-6);
    }
  }

  TEST_CASE("free-flow limit is an error") {
    IdmParams p;
    CHECK_THROWS_AS(equilibrium_state(24.59, p), std::domain_error);
    CHECK_THROWS_AS(equilibrium_state(30.0, p), std::domain_error);
  }

  TEST_CASE("equilibrium curve inverts the state map") {
    IdmParams p;
    EquilibriumCurve curve(p);
    for (double v : {3.0, 10.0, 20.0}) {
      const auto e = equilibrium_state(v, p);
      CHECK(curve.speed(e.density) == doctest::Approx(v).epsilon(1e-3));
    }
    CHECK(curve.flow(0.0) == doctest::Approx(0.0));
  }
}
