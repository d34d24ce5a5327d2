#pragma once

#include <string>
#include <vector>

#include "lanereg/roadsim/idm.hpp"

namespace lanereg::harness {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// Self-checks of the toolkit: fundamental-diagram triples, PDE conservation, locality and
/// Riemann shock speed, MLP gradients, grid aggregation and microscopic vehicle conservation.
std::vector<CheckResult> run_validation(const roadsim::IdmParams& idm);

/// Individual oracles, also used by the tests.
CheckResult check_equilibrium_triples(const roadsim::IdmParams& idm);
CheckResult check_pde_mass(const roadsim::IdmParams& idm, int steps, unsigned seed);
CheckResult check_pde_locality(const roadsim::IdmParams& idm, unsigned seed);
/// Relative error of the numerical shock speed against Rankine-Hugoniot on `cells` cells.
CheckResult check_riemann_shock(const roadsim::IdmParams& idm, int cells);
CheckResult check_gradients(int cases, unsigned seed);
CheckResult check_aggregation(unsigned seed);
CheckResult check_vehicle_conservation(unsigned seed);

}  // namespace lanereg::harness
