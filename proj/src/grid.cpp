#include "lanereg/grid.hpp"

#include <string>

#include "lanereg/common.hpp"

namespace lanereg {

GridSpec GridSpec::for_road(double road_length, int lanes, double grid_length) {
  if (!(grid_length > 0.0)) throw ConfigError("GridSpec: grid length must be positive");
  const double ratio = road_length / grid_length;
  const double n = std::round(ratio);
  if (n < 1.0 || std::abs(ratio - n) > 1e-9) {
    throw ConfigError("GridSpec: grid length " + std::to_string(grid_length) +
                      " does not divide road length " + std::to_string(road_length));
  }
  return GridSpec{grid_length, static_cast<int>(n), lanes};
}

}  // namespace lanereg
